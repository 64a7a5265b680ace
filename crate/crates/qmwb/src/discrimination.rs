//! Inferring Alice's command from outcomes: Bayes posteriors, optimal
//! binary discrimination, and the square-root measurement for more states.

use std::collections::BTreeMap;

use crate::envelopment::{check_envelopment, EnvelopmentMap};
use crate::error::{QmwbError, Result};
use crate::linalg::{
    hermitian_eigenpairs, identity, outer, pseudo_inv_sqrt, quadratic_form, CMatrix,
    CVector, C64,
};
use crate::model::{Povm, QmModel};

/// A prior distribution over Alice's commands.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    weights: BTreeMap<String, f64>,
}

impl Prior {
    pub fn new(weights: BTreeMap<String, f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(QmwbError::Parameter("prior over an empty set".into()));
        }
        let mut total = 0.0;
        for (label, &w) in &weights {
            if w < 0.0 {
                return Err(QmwbError::Parameter(format!(
                    "negative prior weight for `{label}`"
                )));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(QmwbError::Parameter(format!(
                "prior weights sum to {total}, not 1"
            )));
        }
        Ok(Prior { weights })
    }

    pub fn uniform(labels: impl IntoIterator<Item = String>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().collect();
        let n = labels.len();
        if n == 0 {
            return Err(QmwbError::Parameter("prior over an empty set".into()));
        }
        let w = 1.0 / n as f64;
        Prior::new(labels.into_iter().map(|l| (l, w)).collect())
    }

    pub fn weight(&self, label: &str) -> f64 {
        self.weights.get(label).copied().unwrap_or(0.0)
    }

    pub fn weights(&self) -> &BTreeMap<String, f64> {
        &self.weights
    }
}

/// A measurement together with its decision rule and the error probability
/// it achieves.
#[derive(Debug, Clone)]
pub struct DiscriminationResult {
    pub povm: Povm,
    pub error_probability: f64,
    /// Outcome label to the label of the state the receiver declares.
    pub decision_rule: BTreeMap<String, String>,
}

/// Posterior over Alice's commands given the rest of the command triple and
/// the observed outcome.
pub fn bayes_posterior(
    model: &QmModel,
    prior: &Prior,
    bob: &str,
    eve: &str,
    outcome: &str,
) -> Result<BTreeMap<String, f64>> {
    let mut unnormalized = BTreeMap::new();
    let mut total = 0.0;
    for a in model.commands().alice() {
        let cmd = crate::model::Command::new(a.clone(), bob, eve);
        let likelihood = model.born_probability(&cmd, outcome)?;
        let w = prior.weight(a) * likelihood;
        unnormalized.insert(a.clone(), w);
        total += w;
    }
    if total <= 0.0 {
        return Err(QmwbError::ZeroLikelihood(outcome.to_string()));
    }
    Ok(unnormalized
        .into_iter()
        .map(|(a, w)| (a, w / total))
        .collect())
}

/// Minimum-error measurement for two pure states.
///
/// Measures the positive part of `p0·|v0⟩⟨v0| − p1·|v1⟩⟨v1|`; outcome
/// `guess0` declares the first state. The achieved error probability is
/// recomputed from the returned POVM, and for pure states equals
/// `(1 − sqrt(1 − 4·p0·p1·|⟨v0|v1⟩|²)) / 2`.
pub fn helstrom_binary(
    state0: &CVector,
    state1: &CVector,
    p0: f64,
    p1: f64,
) -> Result<DiscriminationResult> {
    if state0.len() != state1.len() {
        return Err(QmwbError::Shape(format!(
            "state dimensions differ: {} vs {}",
            state0.len(),
            state1.len()
        )));
    }
    if (p0 + p1 - 1.0).abs() > 1e-12 || p0 < 0.0 || p1 < 0.0 {
        return Err(QmwbError::Parameter(format!(
            "priors ({p0},{p1}) are not a distribution"
        )));
    }
    let dim = state0.len();
    let gamma = outer(state0, state0) * C64::new(p0, 0.0)
        - outer(state1, state1) * C64::new(p1, 0.0);
    let mut e0 = CMatrix::zeros(dim, dim);
    for (l, v) in hermitian_eigenpairs(&gamma) {
        if l > 0.0 {
            e0 += outer(&v, &v);
        }
    }
    let e1 = identity(dim) - &e0;
    let success = p0 * quadratic_form(&e0, state0).re + p1 * quadratic_form(&e1, state1).re;
    let error_probability = (1.0 - success).clamp(0.0, 1.0);
    let povm = Povm::new(vec![("guess0", e0), ("guess1", e1)])?;
    let decision_rule = BTreeMap::from([
        ("guess0".to_string(), "0".to_string()),
        ("guess1".to_string(), "1".to_string()),
    ]);
    Ok(DiscriminationResult {
        povm,
        error_probability,
        decision_rule,
    })
}

/// Closed-form binary Helstrom error for pure states with overlap magnitude
/// `s` and priors `(p0, p1)`.
pub fn helstrom_error(s: f64, p0: f64, p1: f64) -> f64 {
    0.5 * (1.0 - (1.0 - 4.0 * p0 * p1 * s * s).max(0.0).sqrt())
}

/// Square-root (pretty-good) measurement over a family of labeled pure
/// states. Sub-optimal in general but defined for any count; the identity
/// remainder off the states' support is spread evenly over the outcomes so
/// the POVM is complete.
pub fn pretty_good_measurement(
    states: &[(String, CVector)],
    prior: &Prior,
) -> Result<DiscriminationResult> {
    if states.is_empty() {
        return Err(QmwbError::Parameter("no states to discriminate".into()));
    }
    let dim = states[0].1.len();
    for (label, v) in states {
        if v.len() != dim {
            return Err(QmwbError::Shape(format!(
                "state `{label}` has dimension {}, expected {dim}",
                v.len()
            )));
        }
    }
    let mut rho = CMatrix::zeros(dim, dim);
    for (label, v) in states {
        rho += outer(v, v) * C64::new(prior.weight(label), 0.0);
    }
    let inv_sqrt = pseudo_inv_sqrt(&rho, 1e-12);
    // Remainder off the support, split evenly to complete the POVM.
    let support: CMatrix = &inv_sqrt * &rho * &inv_sqrt;
    let remainder = identity(dim) - support;
    let n = states.len() as f64;
    let mut parts = Vec::with_capacity(states.len());
    let mut decision_rule = BTreeMap::new();
    for (i, (label, v)) in states.iter().enumerate() {
        let scaled = v.map(|z| z * C64::new(prior.weight(label).sqrt(), 0.0));
        let m = &inv_sqrt * outer(&scaled, &scaled) * &inv_sqrt + &remainder / C64::new(n, 0.0);
        let outcome = format!("guess{i}");
        decision_rule.insert(outcome.clone(), label.clone());
        parts.push((outcome, m));
    }
    let povm = Povm::new(parts)?;
    let mut success = 0.0;
    for (i, (label, v)) in states.iter().enumerate() {
        let m = povm.element(&format!("guess{i}"))?;
        success += prior.weight(label) * quadratic_form(m, v).re;
    }
    Ok(DiscriminationResult {
        povm,
        error_probability: (1.0 - success).clamp(0.0, 1.0),
        decision_rule,
    })
}

/// Eve's discrimination errors before and after envelopment.
#[derive(Debug, Clone, Copy)]
pub struct EveAdvantage {
    pub err_alpha: f64,
    pub err_beta: f64,
}

/// Compare Eve's optimal binary error on a pair of the base model's states
/// with her error on the enveloping model's states for the same commands.
///
/// The map must be factored and must pass the envelopment check first;
/// overlaps only shrink under envelopment, so the enveloping error never
/// exceeds the base error.
pub fn eve_advantage(
    alpha: &QmModel,
    beta: &QmModel,
    f: &EnvelopmentMap,
    pair: (&str, &str),
    priors: (f64, f64),
) -> Result<EveAdvantage> {
    let check = check_envelopment(alpha, beta, f, 1e-9)?;
    if !check.holds {
        return Err(QmwbError::Precondition(format!(
            "envelopment check failed with deviation {:e}",
            check.max_deviation
        )));
    }
    let g = f.alice_map()?;
    let (b0, b1) = pair;
    let a0 = g.get(b0).ok_or_else(|| QmwbError::UnknownLabel {
        kind: "alice command",
        label: b0.to_string(),
    })?;
    let a1 = g.get(b1).ok_or_else(|| QmwbError::UnknownLabel {
        kind: "alice command",
        label: b1.to_string(),
    })?;
    let err_alpha =
        helstrom_binary(alpha.state(a0)?, alpha.state(a1)?, priors.0, priors.1)?.error_probability;
    let err_beta =
        helstrom_binary(beta.state(b0)?, beta.state(b1)?, priors.0, priors.1)?.error_probability;
    if err_beta > err_alpha + 1e-10 {
        return Err(QmwbError::Precondition(format!(
            "enveloping error {err_beta} exceeds base error {err_alpha}"
        )));
    }
    Ok(EveAdvantage {
        err_alpha,
        err_beta,
    })
}

/// Entropy of a discrete distribution in nats.
pub fn entropy(dist: &BTreeMap<String, f64>) -> f64 {
    dist.values()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ket(entries: &[f64]) -> CVector {
        CVector::from_iterator(entries.len(), entries.iter().map(|&x| C64::new(x, 0.0)))
    }

    #[test]
    fn orthogonal_states_error_zero() {
        let res = helstrom_binary(&ket(&[1.0, 0.0]), &ket(&[0.0, 1.0]), 0.3, 0.7).unwrap();
        assert!(res.error_probability.abs() < 1e-12);
    }

    #[test]
    fn identical_states_error_half() {
        let v = ket(&[1.0, 0.0]);
        let res = helstrom_binary(&v, &v, 0.5, 0.5).unwrap();
        assert!((res.error_probability - 0.5).abs() < 1e-12);
    }

    #[test]
    fn helstrom_matches_closed_form_at_half_overlap() {
        let gamma = (0.5_f64).acos();
        let res = helstrom_binary(
            &ket(&[1.0, 0.0]),
            &ket(&[gamma.cos(), gamma.sin()]),
            0.5,
            0.5,
        )
        .unwrap();
        let want = helstrom_error(0.5, 0.5, 0.5);
        assert!((want - 0.066_987_298_107_780_68).abs() < 1e-12);
        assert!((res.error_probability - want).abs() < 1e-9);
    }

    #[test]
    fn helstrom_povm_is_valid_projective_pair() {
        let res = helstrom_binary(
            &ket(&[1.0, 0.0]),
            &ket(&[0.6, 0.8]),
            0.5,
            0.5,
        )
        .unwrap();
        let mut sum = CMatrix::zeros(2, 2);
        for m in res.povm.elements() {
            sum += m;
        }
        let (dev, _) = crate::linalg::max_deviation_from(&sum, &identity(2));
        assert!(dev < 1e-10);
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let err = helstrom_binary(&ket(&[1.0, 0.0]), &ket(&[1.0, 0.0, 0.0]), 0.5, 0.5);
        assert!(matches!(err, Err(QmwbError::Shape(_))));
    }

    #[test]
    fn pgm_orthonormal_states_error_zero() {
        let states = vec![
            ("a".to_string(), ket(&[1.0, 0.0, 0.0])),
            ("b".to_string(), ket(&[0.0, 1.0, 0.0])),
            ("c".to_string(), ket(&[0.0, 0.0, 1.0])),
        ];
        let prior = Prior::uniform(states.iter().map(|(l, _)| l.clone())).unwrap();
        let res = pretty_good_measurement(&states, &prior).unwrap();
        assert!(res.error_probability.abs() < 1e-10);
    }

    #[test]
    fn pgm_matches_helstrom_for_two_equiprobable_states() {
        let theta = PI / 8.0;
        let v0 = ket(&[theta.cos(), theta.sin()]);
        let v1 = ket(&[theta.cos(), -theta.sin()]);
        let states = vec![("s0".to_string(), v0.clone()), ("s1".to_string(), v1.clone())];
        let prior = Prior::uniform(states.iter().map(|(l, _)| l.clone())).unwrap();
        let pgm = pretty_good_measurement(&states, &prior).unwrap();
        let hel = helstrom_binary(&v0, &v1, 0.5, 0.5).unwrap();
        assert!((pgm.error_probability - hel.error_probability).abs() < 1e-9);
    }

    #[test]
    fn pgm_povm_is_complete() {
        let states = vec![
            ("a".to_string(), ket(&[1.0, 0.0])),
            ("b".to_string(), ket(&[0.6, 0.8])),
            ("c".to_string(), ket(&[0.0, 1.0])),
        ];
        let prior = Prior::uniform(states.iter().map(|(l, _)| l.clone())).unwrap();
        let res = pretty_good_measurement(&states, &prior).unwrap();
        let mut sum = CMatrix::zeros(2, 2);
        for m in res.povm.elements() {
            sum += m;
        }
        let (dev, _) = crate::linalg::max_deviation_from(&sum, &identity(2));
        assert!(dev < 1e-9, "completeness deviation {dev}");
    }

    #[test]
    fn prior_must_normalize() {
        let weights = BTreeMap::from([("a".to_string(), 0.4), ("b".to_string(), 0.4)]);
        assert!(Prior::new(weights).is_err());
    }
}
