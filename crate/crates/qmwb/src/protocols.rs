//! Concrete key-distribution models: BB84 and B92 with configurable
//! eavesdropping, plus exact and sampled error rates.
//!
//! Intercept-resend is folded into a single measurement pass: Eve's
//! projective measurement followed by Bob's measurement of the resent state
//! becomes a composite POVM with joint outcomes, so every attack stays
//! inside the command-indexed triple.

use std::collections::{BTreeMap, BTreeSet};

use crate::engine::RunLog;
use crate::envelopment::{envelop_with_leakage, EnvelopmentMap, ExtraPovmPolicy};
use crate::error::{QmwbError, Result};
use crate::linalg::{identity, outer, quadratic_form, CMatrix, CVector, C64};
use crate::model::{CommandSet, Povm, QmModel};

pub const BB84_ALICE: [&str; 4] = ["X0", "X1", "Z0", "Z1"];

/// Which protocol a model implements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProtocolSpec {
    Bb84,
    /// Two states `cos θ|0⟩ ± sin θ|1⟩` with overlap `cos 2θ`.
    B92 { theta: f64 },
}

/// Eve's basis choice for intercept-resend, realized through command
/// scheduling weights.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum BasisPolicy {
    #[default]
    UniformRandom,
    /// Always intercept in the named basis (`Z` or `X` for BB84).
    Fixed(String),
}

/// Eve's attack configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum AttackSpec {
    #[default]
    None,
    InterceptResend {
        /// Fraction of trials attacked, in [0,1].
        fraction: f64,
        basis_policy: BasisPolicy,
    },
    LeakageReadout {
        /// Pairwise leakage overlap bound, in [0,1).
        r: f64,
    },
}

impl AttackSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            AttackSpec::InterceptResend { fraction, .. } => {
                if !(0.0..=1.0).contains(fraction) {
                    return Err(QmwbError::Parameter(format!(
                        "attack fraction {fraction} outside [0,1]"
                    )));
                }
            }
            AttackSpec::LeakageReadout { r } => {
                if !(0.0..1.0).contains(r) {
                    return Err(QmwbError::Parameter(format!(
                        "leakage bound r must satisfy 0 <= r < 1, got {r}"
                    )));
                }
            }
            AttackSpec::None => {}
        }
        Ok(())
    }
}

/// A sampled error-rate estimate with a 3-sigma binomial halfwidth.
#[derive(Debug, Clone, Copy)]
pub struct QberEstimate {
    pub qber: f64,
    pub n_compared: u64,
    pub confidence_halfwidth: f64,
}

fn ket(entries: &[f64]) -> CVector {
    CVector::from_iterator(entries.len(), entries.iter().map(|&x| C64::new(x, 0.0)))
}

fn projector(v: &CVector) -> CMatrix {
    outer(v, v)
}

/// Composite POVM for intercept-resend: Eve measures projectively onto
/// `eve_states`, resends the measured state, and Bob applies `bob_povm`.
/// The joint-outcome element for (Eve j, Bob o) is
/// `⟨φ_j|M_o|φ_j⟩ · |φ_j⟩⟨φ_j|`, which sums to the identity.
fn intercept_povm(eve_states: &[CVector], bob_povm: &Povm) -> Result<Povm> {
    let mut parts = Vec::new();
    for (j, phi) in eve_states.iter().enumerate() {
        let proj = projector(phi);
        for (o, m) in bob_povm.iter() {
            let c = quadratic_form(m, phi).re.max(0.0);
            parts.push((format!("e{j}{o}"), &proj * C64::new(c, 0.0)));
        }
    }
    Povm::new(parts)
}

/// The four-state two-basis protocol model with the requested attack.
pub fn bb84_model(attack: &AttackSpec) -> Result<QmModel> {
    attack.validate()?;
    if let AttackSpec::LeakageReadout { r } = attack {
        let base = bb84_model(&AttackSpec::None)?;
        return Ok(leakage_attack_model(&base, *r)?.0);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let z0 = ket(&[1.0, 0.0]);
    let z1 = ket(&[0.0, 1.0]);
    let x0 = ket(&[s, s]);
    let x1 = ket(&[s, -s]);
    let states: BTreeMap<String, CVector> = [
        ("Z0", z0.clone()),
        ("Z1", z1.clone()),
        ("X0", x0.clone()),
        ("X1", x1.clone()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();

    let basis_states = |name: &str| -> Vec<CVector> {
        match name {
            "Z" => vec![z0.clone(), z1.clone()],
            _ => vec![x0.clone(), x1.clone()],
        }
    };
    let bob_povm = |name: &str| -> Result<Povm> {
        let vs = basis_states(name);
        Povm::new(vec![("b0", projector(&vs[0])), ("b1", projector(&vs[1]))])
    };

    let mut eve = vec!["idle".to_string()];
    if matches!(attack, AttackSpec::InterceptResend { .. }) {
        eve.push("ivZ".to_string());
        eve.push("ivX".to_string());
    }
    let commands = CommandSet::new(
        BB84_ALICE.iter().map(|s| s.to_string()).collect(),
        vec!["measZ".to_string(), "measX".to_string()],
        eve.clone(),
    )?;

    let mut povms = BTreeMap::new();
    for bob_basis in ["Z", "X"] {
        let bob_cmd = format!("meas{bob_basis}");
        let bp = bob_povm(bob_basis)?;
        povms.insert((bob_cmd.clone(), "idle".to_string()), bp.clone());
        for eve_cmd in &eve {
            if let Some(eve_basis) = eve_cmd.strip_prefix("iv") {
                povms.insert(
                    (bob_cmd.clone(), eve_cmd.clone()),
                    intercept_povm(&basis_states(eve_basis), &bp)?,
                );
            }
        }
    }
    QmModel::new(2, commands, states, BTreeMap::new(), povms)
}

/// The two-state protocol model with the requested attack. Bob's receiver
/// projects against one of the two signal states; a click on the orthogonal
/// complement is conclusive for the other bit.
pub fn b92_model(theta: f64, attack: &AttackSpec) -> Result<QmModel> {
    if !(theta > 0.0 && theta <= std::f64::consts::FRAC_PI_4) {
        return Err(QmwbError::Parameter(format!(
            "theta must lie in (0, pi/4], got {theta}"
        )));
    }
    attack.validate()?;
    if let AttackSpec::LeakageReadout { r } = attack {
        let base = b92_model(theta, &AttackSpec::None)?;
        return Ok(leakage_attack_model(&base, *r)?.0);
    }
    let psi0 = ket(&[theta.cos(), theta.sin()]);
    let psi1 = ket(&[theta.cos(), -theta.sin()]);
    let states: BTreeMap<String, CVector> = [("send0", psi0.clone()), ("send1", psi1.clone())]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();

    // filter_b tests against psi_b: the complement click excludes bit b,
    // hence is conclusive for bit 1-b.
    let filter_povm = |b: usize| -> Result<Povm> {
        let psi = if b == 0 { &psi0 } else { &psi1 };
        let p = projector(psi);
        let conclusive = identity(2) - &p;
        Povm::new(vec![
            (format!("b{}", 1 - b), conclusive),
            ("incon".to_string(), p),
        ])
    };

    let mut eve = vec!["idle".to_string()];
    if matches!(attack, AttackSpec::InterceptResend { .. }) {
        eve.push("ivZ".to_string());
    }
    let commands = CommandSet::new(
        vec!["send0".to_string(), "send1".to_string()],
        vec!["filter0".to_string(), "filter1".to_string()],
        eve.clone(),
    )?;

    let z_states = vec![ket(&[1.0, 0.0]), ket(&[0.0, 1.0])];
    let mut povms = BTreeMap::new();
    for b in 0..2 {
        let bob_cmd = format!("filter{b}");
        let bp = filter_povm(b)?;
        povms.insert((bob_cmd.clone(), "idle".to_string()), bp.clone());
        if eve.iter().any(|e| e == "ivZ") {
            povms.insert(
                (bob_cmd.clone(), "ivZ".to_string()),
                intercept_povm(&z_states, &bp)?,
            );
        }
    }
    QmModel::new(2, commands, states, BTreeMap::new(), povms)
}

/// Apply the leakage construction to a protocol model and tag the extra Eve
/// commands as Eve-private so schedulers keep them out of protocol traffic.
pub fn leakage_attack_model(
    protocol_model: &QmModel,
    r: f64,
) -> Result<(QmModel, EnvelopmentMap)> {
    let base_eve: BTreeSet<String> = protocol_model.commands().eve().iter().cloned().collect();
    let (mut beta, map) = envelop_with_leakage(protocol_model, r, ExtraPovmPolicy::Helstrom)?;
    let mut private: BTreeSet<String> = beta
        .commands()
        .eve()
        .iter()
        .filter(|e| !base_eve.contains(*e))
        .cloned()
        .collect();
    private.extend(protocol_model.eve_private().iter().cloned());
    beta.set_eve_private(private);
    Ok((beta, map))
}

/// Alice bit encoded in an Alice command label (`Z0`, `X1`, `send0`, ...).
pub fn alice_bit(label: &str) -> Option<u8> {
    match label.chars().last() {
        Some('0') => Some(0),
        Some('1') => Some(1),
        _ => None,
    }
}

/// Bob's bit encoded in an outcome label (`b0`, `e1b0`, ...); `None` for
/// inconclusive or Eve-only outcomes.
pub fn bob_bit(outcome: &str) -> Option<u8> {
    if outcome.ends_with("incon") {
        return None;
    }
    let pos = outcome.rfind('b')?;
    match &outcome[pos + 1..] {
        "0" => Some(0),
        "1" => Some(1),
        _ => None,
    }
}

fn bb84_bases_match(alice: &str, bob: &str) -> bool {
    match (alice.chars().next(), bob.chars().last()) {
        (Some(a), Some(b)) => a == b,
        _ => false,
    }
}

/// Scheduling weights over Eve's commands implied by an attack
/// specification. Eve-private commands never appear.
pub fn eve_weights(model: &QmModel, attack: &AttackSpec) -> Result<Vec<(String, f64)>> {
    attack.validate()?;
    let public: Vec<String> = model
        .commands()
        .eve()
        .iter()
        .filter(|e| !model.eve_private().contains(*e))
        .cloned()
        .collect();
    if !public.contains(&"idle".to_string()) {
        return Err(QmwbError::UnsupportedModel(
            "model has no `idle` Eve command".into(),
        ));
    }
    match attack {
        AttackSpec::None | AttackSpec::LeakageReadout { .. } => {
            Ok(vec![("idle".to_string(), 1.0)])
        }
        AttackSpec::InterceptResend {
            fraction,
            basis_policy,
        } => {
            let intercepts: Vec<String> = match basis_policy {
                BasisPolicy::UniformRandom => public
                    .iter()
                    .filter(|e| e.starts_with("iv"))
                    .cloned()
                    .collect(),
                BasisPolicy::Fixed(basis) => {
                    let label = format!("iv{basis}");
                    if !public.contains(&label) {
                        return Err(QmwbError::UnsupportedModel(format!(
                            "model has no Eve command `{label}`"
                        )));
                    }
                    vec![label]
                }
            };
            if intercepts.is_empty() {
                return Err(QmwbError::UnsupportedModel(
                    "model has no intercept commands".into(),
                ));
            }
            let mut out = vec![("idle".to_string(), 1.0 - fraction)];
            let share = fraction / intercepts.len() as f64;
            out.extend(intercepts.into_iter().map(|e| (e, share)));
            Ok(out)
        }
    }
}

fn check_protocol_structure(model: &QmModel, protocol: &ProtocolSpec) -> Result<()> {
    let ok = match protocol {
        ProtocolSpec::Bb84 => {
            model.commands().alice() == BB84_ALICE.map(String::from).as_slice()
        }
        ProtocolSpec::B92 { .. } => {
            model.commands().alice() == ["send0".to_string(), "send1".to_string()].as_slice()
        }
    };
    if !ok {
        return Err(QmwbError::UnsupportedModel(format!(
            "Alice command set {:?} does not match the protocol",
            model.commands().alice()
        )));
    }
    Ok(())
}

/// Analytic sifted error rate: probability-table rows over basis-matched
/// (BB84) or conclusive (B92) events, uniform Alice bits and bases, Eve
/// weighted by the attack fraction.
pub fn exact_qber(model: &QmModel, protocol: &ProtocolSpec, attack: &AttackSpec) -> Result<f64> {
    check_protocol_structure(model, protocol)?;
    let weights = eve_weights(model, attack)?;
    let alice = model.commands().alice();
    let bob = model.commands().bob();
    let w_alice = 1.0 / alice.len() as f64;
    let w_bob = 1.0 / bob.len() as f64;
    let mut errors = 0.0;
    let mut total = 0.0;
    for a in alice {
        let a_bit = alice_bit(a).ok_or_else(|| {
            QmwbError::UnsupportedModel(format!("Alice label `{a}` carries no bit"))
        })?;
        for b in bob {
            if matches!(protocol, ProtocolSpec::Bb84) && !bb84_bases_match(a, b) {
                continue;
            }
            for (e, w_e) in &weights {
                if *w_e == 0.0 {
                    continue;
                }
                let cmd = crate::model::Command::new(a.clone(), b.clone(), e.clone());
                for (outcome, p) in model.outcome_distribution(&cmd)? {
                    if let Some(bit) = bob_bit(&outcome) {
                        let w = w_alice * w_bob * w_e * p;
                        total += w;
                        if bit != a_bit {
                            errors += w;
                        }
                    }
                }
            }
        }
    }
    if total <= 0.0 {
        return Err(QmwbError::InsufficientData(
            "no sifted probability mass".into(),
        ));
    }
    Ok(errors / total)
}

/// Sift a run log and estimate the error rate from a revealed sample.
///
/// BB84 keeps basis-matched trials, B92 keeps conclusive ones; the first
/// `ceil(sample_fraction · n)` sifted trials are revealed for comparison.
pub fn sift_and_estimate_qber(
    log: &RunLog,
    protocol: &ProtocolSpec,
    sample_fraction: f64,
) -> Result<QberEstimate> {
    if !(sample_fraction > 0.0 && sample_fraction <= 1.0) {
        return Err(QmwbError::Parameter(format!(
            "sample fraction must lie in (0,1], got {sample_fraction}"
        )));
    }
    if log.records.is_empty() {
        return Err(QmwbError::InsufficientData("empty run log".into()));
    }
    let mut sifted: Vec<(u8, u8)> = Vec::new();
    for rec in &log.records {
        let Some(a_bit) = alice_bit(&rec.command.alice) else {
            continue;
        };
        if matches!(protocol, ProtocolSpec::Bb84)
            && !bb84_bases_match(&rec.command.alice, &rec.command.bob)
        {
            continue;
        }
        if let Some(b_bit) = bob_bit(&rec.outcome) {
            sifted.push((a_bit, b_bit));
        }
    }
    if sifted.is_empty() {
        return Err(QmwbError::InsufficientData("no sifted trials".into()));
    }
    let reveal = ((sample_fraction * sifted.len() as f64).ceil() as usize).min(sifted.len());
    let errors = sifted[..reveal]
        .iter()
        .filter(|(a, b)| a != b)
        .count() as f64;
    let n = reveal as f64;
    let qber = errors / n;
    Ok(QberEstimate {
        qber,
        n_compared: reveal as u64,
        confidence_halfwidth: 3.0 * (qber * (1.0 - qber) / n).sqrt(),
    })
}
