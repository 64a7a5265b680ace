#![allow(dead_code)]

//! Shared helpers for integration tests: random model generation and the
//! grid-search discrimination oracle. Everything here is independent of the
//! code paths it is used to check.

use std::collections::BTreeMap;

use qmwb::linalg::{outer, CMatrix, CVector, C64};
use qmwb::model::{CommandSet, Povm, QmModel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Standard normal via Box-Muller.
pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> CVector {
    let v = CVector::from_fn(dim, |_, _| C64::new(gaussian(rng), gaussian(rng)));
    let n = v.norm();
    v.map(|z| z / C64::new(n, 0.0))
}

/// Haar-ish random unitary from the QR decomposition of a Gaussian matrix.
pub fn random_unitary(rng: &mut ChaCha8Rng, dim: usize) -> CMatrix {
    let m = CMatrix::from_fn(dim, dim, |_, _| C64::new(gaussian(rng), gaussian(rng)));
    m.qr().q()
}

/// Projective POVM from the columns of a random unitary, outcomes `o0..`.
pub fn random_projective_povm(rng: &mut ChaCha8Rng, dim: usize) -> Povm {
    let u = random_unitary(rng, dim);
    let parts = (0..dim)
        .map(|k| {
            let col = u.column(k).into_owned();
            (format!("o{k}"), outer(&col, &col))
        })
        .collect();
    Povm::new(parts).unwrap()
}

/// A random model: `n_alice` random pure states, singleton Bob, `n_eve`
/// random projective POVMs, identity evolution.
pub fn random_model(rng: &mut ChaCha8Rng, dim: usize, n_alice: usize, n_eve: usize) -> QmModel {
    let alice: Vec<String> = (0..n_alice).map(|i| format!("a{i}")).collect();
    let eve: Vec<String> = (0..n_eve).map(|i| format!("e{i}")).collect();
    let commands = CommandSet::new(alice.clone(), vec!["b".to_string()], eve.clone()).unwrap();
    let states: BTreeMap<String, CVector> = alice
        .iter()
        .map(|a| (a.clone(), random_state(rng, dim)))
        .collect();
    let povms: BTreeMap<(String, String), Povm> = eve
        .iter()
        .map(|e| (("b".to_string(), e.clone()), random_projective_povm(rng, dim)))
        .collect();
    QmModel::new(dim, commands, states, BTreeMap::new(), povms).unwrap()
}

/// Independent minimum-error oracle for two real states with overlap `s`:
/// exhaustive search over projective measurements in the spanned plane.
pub fn grid_helstrom_error(s: f64, p0: f64, p1: f64, points: usize) -> f64 {
    // Real plane realization: v0 along the first axis, v1 at angle acos(s).
    let gamma = s.clamp(-1.0, 1.0).acos();
    let (c, d) = (gamma.cos(), gamma.sin());
    let mut best = f64::INFINITY;
    for k in 0..points {
        let phi = std::f64::consts::PI * k as f64 / points as f64;
        let (m0, m1) = (phi.cos(), phi.sin());
        // P(outcome m | state) = |<m|state>|^2 in the plane.
        let p_m_v0 = m0 * m0;
        let p_m_v1 = (m0 * c + m1 * d).powi(2);
        // Outcome m declares state 0, complement declares state 1 -- or the
        // swapped assignment, whichever errs less.
        let err_a = p0 * (1.0 - p_m_v0) + p1 * p_m_v1;
        let err_b = p0 * p_m_v0 + p1 * (1.0 - p_m_v1);
        best = best.min(err_a.min(err_b));
    }
    best
}
