//! Envelopment of one model by another.
//!
//! A map from (command, outcome) pairs of an enveloping model onto those of a
//! base model preserves probabilities when every base probability equals the
//! sum over its preimage. The leakage construction builds such a map for any
//! base model and any overlap bound `r < 1`: Alice's states pick up a hidden
//! tensor factor whose pairwise overlaps are exactly `r`, Eve's original
//! measurements are extended by the identity on that factor, and Eve gains an
//! extra readout command measuring the enlarged states directly.

use std::collections::BTreeMap;

use crate::discrimination::{helstrom_binary, pretty_good_measurement, Prior};
use crate::error::{QmwbError, Result};
use crate::linalg::{equiangular_unit_vectors, kron, kron_vec, CVector};
use crate::model::{Command, CommandSet, Povm, QmModel};

/// Functions `g` on commands and `h` on outcomes realizing a non-mixing map
/// `f(b,j) = (g(b), h(j))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactoredMap {
    pub g: BTreeMap<Command, Command>,
    pub h: BTreeMap<String, String>,
}

/// A partial probability-preserving map from the (command, outcome) pairs of
/// an enveloping model to those of a base model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvelopmentMap {
    mapping: BTreeMap<(Command, String), (Command, String)>,
    factored: Option<FactoredMap>,
}

impl EnvelopmentMap {
    pub fn new(
        mapping: BTreeMap<(Command, String), (Command, String)>,
        factored: Option<FactoredMap>,
    ) -> Result<Self> {
        if let Some(fac) = &factored {
            for ((b, j), (tb, tj)) in &mapping {
                let gb = fac.g.get(b).ok_or_else(|| {
                    QmwbError::Domain(format!("factored map: g undefined on command {b}"))
                })?;
                let hj = fac.h.get(j).ok_or_else(|| {
                    QmwbError::Domain(format!("factored map: h undefined on outcome `{j}`"))
                })?;
                if gb != tb || hj != tj {
                    return Err(QmwbError::Domain(format!(
                        "factored map disagrees with explicit mapping at ({b},{j})"
                    )));
                }
            }
        }
        Ok(EnvelopmentMap { mapping, factored })
    }

    /// The identity envelopment of a model by itself.
    pub fn identity(model: &QmModel) -> Result<Self> {
        let mut mapping = BTreeMap::new();
        let mut g = BTreeMap::new();
        let mut h = BTreeMap::new();
        for c in model.commands().iter() {
            g.insert(c.clone(), c.clone());
            for o in model.povm(&c.bob, &c.eve)?.outcomes() {
                mapping.insert((c.clone(), o.clone()), (c.clone(), o.clone()));
                h.insert(o.clone(), o.clone());
            }
        }
        EnvelopmentMap::new(mapping, Some(FactoredMap { g, h }))
    }

    pub fn mapping(&self) -> &BTreeMap<(Command, String), (Command, String)> {
        &self.mapping
    }

    pub fn factored(&self) -> Option<&FactoredMap> {
        self.factored.as_ref()
    }

    /// Command-level Alice map extracted from the factored form.
    pub fn alice_map(&self) -> Result<BTreeMap<String, String>> {
        let fac = self.factored.as_ref().ok_or_else(|| {
            QmwbError::Domain("envelopment map is not factored".into())
        })?;
        let mut out = BTreeMap::new();
        for (b, gb) in &fac.g {
            if let Some(prev) = out.insert(b.alice.clone(), gb.alice.clone()) {
                if prev != gb.alice {
                    return Err(QmwbError::Domain(format!(
                        "g does not factor through Alice commands at `{}`",
                        b.alice
                    )));
                }
            }
        }
        Ok(out)
    }

    // ---- text format ------------------------------------------------------

    pub fn to_text(&self) -> String {
        let mut out = String::from("qmwb-map v1\n");
        for ((b, j), (tb, tj)) in &self.mapping {
            out.push_str(&format!(
                "pair {} {} {} {} {} {} {} {}\n",
                b.alice, b.bob, b.eve, j, tb.alice, tb.bob, tb.eve, tj
            ));
        }
        if let Some(fac) = &self.factored {
            for (b, tb) in &fac.g {
                out.push_str(&format!(
                    "g {} {} {} {} {} {}\n",
                    b.alice, b.bob, b.eve, tb.alice, tb.bob, tb.eve
                ));
            }
            for (j, tj) in &fac.h {
                out.push_str(&format!("h {j} {tj}\n"));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut mapping = BTreeMap::new();
        let mut g = BTreeMap::new();
        let mut h = BTreeMap::new();
        let mut saw_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if line != "qmwb-map v1" {
                    return Err(QmwbError::Parse {
                        line: lineno,
                        message: format!("expected header `qmwb-map v1`, got `{line}`"),
                    });
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["pair", ba, bb, be, j, ta, tb, te, tj] => {
                    mapping.insert(
                        (Command::new(*ba, *bb, *be), j.to_string()),
                        (Command::new(*ta, *tb, *te), tj.to_string()),
                    );
                }
                ["g", ba, bb, be, ta, tb, te] => {
                    g.insert(Command::new(*ba, *bb, *be), Command::new(*ta, *tb, *te));
                }
                ["h", j, tj] => {
                    h.insert(j.to_string(), tj.to_string());
                }
                _ => {
                    return Err(QmwbError::Parse {
                        line: lineno,
                        message: format!("malformed map line `{line}`"),
                    })
                }
            }
        }
        if !saw_header {
            return Err(QmwbError::Parse {
                line: 1,
                message: "missing map header".into(),
            });
        }
        let factored = if g.is_empty() && h.is_empty() {
            None
        } else {
            Some(FactoredMap { g, h })
        };
        EnvelopmentMap::new(mapping, factored)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// How Eve's extra readout command measures the enlarged states.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ExtraPovmPolicy {
    /// Binary minimum-error measurement distinguishing the enlarged states of
    /// a designated Alice command pair (first two labels when unspecified).
    #[default]
    Helstrom,
    /// Helstrom measurement on an explicit Alice command pair.
    HelstromPair(String, String),
    /// Square-root measurement over all enlarged states, uniform prior.
    PrettyGood,
}

/// The ingredients of the leakage construction for one base model.
#[derive(Debug, Clone)]
pub struct LeakageSpec {
    pub r: f64,
    pub leakage_dim: usize,
    pub w_vectors: BTreeMap<String, CVector>,
    pub extra_commands: Vec<String>,
    pub policy: ExtraPovmPolicy,
}

/// Unit vectors with pairwise inner product exactly `r`, dimension equal to
/// the count. Errors when `r` is outside `[0, 1)`.
pub fn build_leakage_vectors(n: usize, r: f64) -> Result<Vec<CVector>> {
    equiangular_unit_vectors(n, r)
}

impl LeakageSpec {
    /// Plan a leakage envelopment of `alpha` with overlap bound `r`.
    pub fn plan(alpha: &QmModel, r: f64, policy: ExtraPovmPolicy) -> Result<LeakageSpec> {
        let alice = alpha.commands().alice();
        let vectors = build_leakage_vectors(alice.len(), r)?;
        let w_vectors = alice
            .iter()
            .cloned()
            .zip(vectors)
            .collect::<BTreeMap<_, _>>();
        // Reserved `#` suffix keeps the extra label out of the base Eve set.
        let mut label = String::from("leak#readout");
        while alpha.commands().eve().contains(&label) {
            label.push('+');
        }
        Ok(LeakageSpec {
            r,
            leakage_dim: alice.len(),
            w_vectors,
            extra_commands: vec![label],
            policy,
        })
    }
}

/// Build the enveloping model and the probability-preserving map onto the
/// base model.
///
/// The enveloping model has dimension `|A| · dim(alpha)`, states
/// `w(b_A) ⊗ v(b_A)`, Eve's base measurements extended by the identity on the
/// leakage factor, and one extra Eve command measuring the enlarged states
/// per the policy. The map is factored: identity on the shared commands and
/// outcomes.
pub fn envelop_with_leakage(
    alpha: &QmModel,
    r: f64,
    policy: ExtraPovmPolicy,
) -> Result<(QmModel, EnvelopmentMap)> {
    let report = alpha.validate();
    if !report.is_valid() {
        return Err(QmwbError::Validation(format!(
            "base model fails validation: {}",
            report.violations[0].description
        )));
    }
    let spec = LeakageSpec::plan(alpha, r, policy)?;
    let leak_dim = spec.leakage_dim;
    let beta_dim = leak_dim * alpha.dim();

    let states: BTreeMap<String, CVector> = alpha
        .commands()
        .alice()
        .iter()
        .map(|a| {
            let v = alpha.state(a)?;
            Ok((a.clone(), kron_vec(&spec.w_vectors[a], v)))
        })
        .collect::<Result<_>>()?;

    let mut eve: Vec<String> = alpha.commands().eve().to_vec();
    eve.extend(spec.extra_commands.iter().cloned());
    let commands = CommandSet::new(
        alpha.commands().alice().to_vec(),
        alpha.commands().bob().to_vec(),
        eve,
    )?;

    let leak_id = crate::linalg::identity(leak_dim);
    let mut povms: BTreeMap<(String, String), Povm> = BTreeMap::new();
    for ((b, e), povm) in alpha.povms() {
        let parts = povm
            .iter()
            .map(|(o, m)| (o.clone(), kron(&leak_id, m)))
            .collect();
        povms.insert((b.clone(), e.clone()), Povm::new(parts)?);
    }
    let extra_povm = extra_readout_povm(&spec, &states, beta_dim)?;
    for b in alpha.commands().bob() {
        for extra in &spec.extra_commands {
            povms.insert((b.clone(), extra.clone()), extra_povm.clone());
        }
    }

    let mut unitaries = BTreeMap::new();
    for c in alpha.commands().iter() {
        if let Some(u) = alpha.unitary(&c) {
            unitaries.insert(c.clone(), kron(&leak_id, u));
        }
    }

    let beta = QmModel::new(beta_dim, commands, states, unitaries, povms)?;

    // Identity-factored map over the shared commands and outcomes.
    let mut mapping = BTreeMap::new();
    let mut g = BTreeMap::new();
    let mut h = BTreeMap::new();
    for c in alpha.commands().iter() {
        g.insert(c.clone(), c.clone());
        for o in alpha.povm(&c.bob, &c.eve)?.outcomes() {
            mapping.insert((c.clone(), o.clone()), (c.clone(), o.clone()));
            h.insert(o.clone(), o.clone());
        }
    }
    let map = EnvelopmentMap::new(mapping, Some(FactoredMap { g, h }))?;
    Ok((beta, map))
}

fn extra_readout_povm(
    spec: &LeakageSpec,
    beta_states: &BTreeMap<String, CVector>,
    beta_dim: usize,
) -> Result<Povm> {
    let labels: Vec<&String> = beta_states.keys().collect();
    match &spec.policy {
        ExtraPovmPolicy::Helstrom | ExtraPovmPolicy::HelstromPair(_, _) => {
            let (a0, a1) = match &spec.policy {
                ExtraPovmPolicy::HelstromPair(a0, a1) => (a0.clone(), a1.clone()),
                _ => {
                    if labels.len() < 2 {
                        // Degenerate single-command model: nothing to distinguish.
                        return Povm::new(vec![("guess0", crate::linalg::identity(beta_dim))]);
                    }
                    (labels[0].clone(), labels[1].clone())
                }
            };
            let v0 = beta_states.get(&a0).ok_or_else(|| QmwbError::UnknownLabel {
                kind: "alice command",
                label: a0.clone(),
            })?;
            let v1 = beta_states.get(&a1).ok_or_else(|| QmwbError::UnknownLabel {
                kind: "alice command",
                label: a1.clone(),
            })?;
            Ok(helstrom_binary(v0, v1, 0.5, 0.5)?.povm)
        }
        ExtraPovmPolicy::PrettyGood => {
            let states: Vec<(String, CVector)> = beta_states
                .iter()
                .map(|(a, v)| (a.clone(), v.clone()))
                .collect();
            let prior = Prior::uniform(states.iter().map(|(a, _)| a.clone()))?;
            Ok(pretty_good_measurement(&states, &prior)?.povm)
        }
    }
}

/// Verdict of checking a probability-preserving map.
#[derive(Debug, Clone)]
pub struct EnvelopmentCheck {
    pub holds: bool,
    pub max_deviation: f64,
    /// The base-model (command, outcome) pair with the worst deviation.
    pub witness: Option<(Command, String)>,
}

/// Verify that `f` preserves probabilities: for each (command, outcome) in
/// the image, the base probability equals the sum of enveloping
/// probabilities over the preimage, within `tol`.
pub fn check_envelopment(
    alpha: &QmModel,
    beta: &QmModel,
    f: &EnvelopmentMap,
    tol: f64,
) -> Result<EnvelopmentCheck> {
    let mut preimages: BTreeMap<(Command, String), Vec<(Command, String)>> = BTreeMap::new();
    for ((b, j), (tb, tj)) in f.mapping() {
        if !beta.commands().contains(b) {
            return Err(QmwbError::Domain(format!(
                "map domain command {b} is not in the enveloping model"
            )));
        }
        beta.povm(&b.bob, &b.eve)?.element(j)?;
        if !alpha.commands().contains(tb) {
            return Err(QmwbError::Domain(format!(
                "map target command {tb} is not in the base model"
            )));
        }
        alpha.povm(&tb.bob, &tb.eve)?.element(tj)?;
        preimages
            .entry((tb.clone(), tj.clone()))
            .or_default()
            .push((b.clone(), j.clone()));
    }
    let mut max_deviation = 0.0;
    let mut witness = None;
    for ((tb, tj), pre) in &preimages {
        let p_alpha = alpha.born_probability(tb, tj)?;
        let mut p_beta = 0.0;
        for (b, j) in pre {
            p_beta += beta.born_probability(b, j)?;
        }
        let dev = (p_alpha - p_beta).abs();
        if dev > max_deviation {
            max_deviation = dev;
            witness = Some((tb.clone(), tj.clone()));
        }
    }
    Ok(EnvelopmentCheck {
        holds: max_deviation <= tol,
        max_deviation,
        witness,
    })
}

/// Verdict of the overlap-reduction inequality.
#[derive(Debug, Clone)]
pub struct OverlapCheck {
    pub holds: bool,
    /// Pair of enveloping-model Alice labels with the largest excess.
    pub worst_pair: Option<(String, String)>,
    /// Largest value of `S_beta - r·S_alpha` over distinct pairs.
    pub max_excess: f64,
}

/// Check `S_beta(a,a') <= r · S_alpha(g(a), g(a'))` for all distinct Alice
/// pairs, where `g` maps the enveloping model's Alice labels onto the base
/// model's.
pub fn verify_overlap_reduction(
    alpha: &QmModel,
    beta: &QmModel,
    g: &BTreeMap<String, String>,
    r: f64,
) -> Result<OverlapCheck> {
    for a in beta.commands().alice() {
        let target = g.get(a).ok_or_else(|| {
            QmwbError::Domain(format!("g undefined on Alice command `{a}`"))
        })?;
        if !alpha.commands().alice().contains(target) {
            return Err(QmwbError::Domain(format!(
                "g maps `{a}` to unknown base Alice command `{target}`"
            )));
        }
    }
    for a in alpha.commands().alice() {
        if !g.values().any(|t| t == a) {
            return Err(QmwbError::Domain(format!(
                "g is not surjective: base Alice command `{a}` is not covered"
            )));
        }
    }
    let labels = beta.commands().alice();
    let mut max_excess = f64::NEG_INFINITY;
    let mut worst_pair = None;
    for (i, a) in labels.iter().enumerate() {
        for a2 in labels.iter().skip(i + 1) {
            let s_beta = beta.overlap(a, a2)?;
            let s_alpha = alpha.overlap(&g[a], &g[a2])?;
            let excess = s_beta - r * s_alpha;
            if excess > max_excess {
                max_excess = excess;
                worst_pair = Some((a.clone(), a2.clone()));
            }
        }
    }
    if worst_pair.is_none() {
        max_excess = 0.0;
    }
    Ok(OverlapCheck {
        holds: max_excess <= 1e-10,
        worst_pair,
        max_excess,
    })
}

/// Compose two envelopments: `f2` mapping a third model onto the enveloping
/// model and `f1` mapping the enveloping model onto the base.
pub fn compose_envelopments(
    f2: &EnvelopmentMap,
    f1: &EnvelopmentMap,
) -> Result<EnvelopmentMap> {
    // Envelopment maps are partial: pairs whose image falls outside the
    // inner map's domain (such as a leakage layer's readout command) simply
    // drop out of the composition.
    let mut mapping = BTreeMap::new();
    for (key, mid) in f2.mapping() {
        if let Some(target) = f1.mapping().get(mid) {
            mapping.insert(key.clone(), target.clone());
        }
    }
    if mapping.is_empty() {
        return Err(QmwbError::Composition(
            "no image pair of the outer map lies in the inner map's domain".into(),
        ));
    }
    let factored = match (f2.factored(), f1.factored()) {
        (Some(fac2), Some(fac1)) => {
            let mut g = BTreeMap::new();
            for (b, mid) in &fac2.g {
                if let Some(t) = fac1.g.get(mid) {
                    g.insert(b.clone(), t.clone());
                }
            }
            let mut h = BTreeMap::new();
            for (j, mid) in &fac2.h {
                if let Some(t) = fac1.h.get(mid) {
                    h.insert(j.clone(), t.clone());
                }
            }
            let consistent = mapping.iter().all(|((b, j), (tb, tj))| {
                g.get(b) == Some(tb) && h.get(j) == Some(tj)
            });
            consistent.then_some(FactoredMap { g, h })
        }
        _ => None,
    };
    EnvelopmentMap::new(mapping, factored)
}
