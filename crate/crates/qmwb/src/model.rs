//! Command-indexed quantum models and Born-rule probabilities.
//!
//! A model is a triple of functions over a finite command set: state
//! preparation indexed by Alice's command, unitary evolution indexed by the
//! full command triple (defaulting to the identity), and a POVM indexed by
//! the Bob/Eve part of the command. Together they generate outcome
//! probabilities for every command triple.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::error::{QmwbError, Result};
use crate::linalg::{
    self, adjoint_apply, hermitian_eigenvalues, hermiticity_deviation, inner, quadratic_form,
    unitarity_deviation, CMatrix, CVector, Tolerances, C64,
};

/// One concatenated command: Alice, Bob, and Eve's labels in that order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Command {
    pub alice: String,
    pub bob: String,
    pub eve: String,
}

impl Command {
    pub fn new(alice: impl Into<String>, bob: impl Into<String>, eve: impl Into<String>) -> Self {
        Command {
            alice: alice.into(),
            bob: bob.into(),
            eve: eve.into(),
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.alice, self.bob, self.eve)
    }
}

fn check_label(kind: &'static str, label: &str) -> Result<()> {
    if label.is_empty() || label.chars().any(|c| c.is_whitespace()) {
        return Err(QmwbError::Domain(format!(
            "invalid {kind} label `{label}`: labels must be non-empty and whitespace-free"
        )));
    }
    Ok(())
}

/// The finite sets of labels available to each party. The full command set is
/// the cartesian product, enumerated lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandSet {
    alice: Vec<String>,
    bob: Vec<String>,
    eve: Vec<String>,
}

impl CommandSet {
    pub fn new<S: Into<String>>(
        alice: Vec<S>,
        bob: Vec<S>,
        eve: Vec<S>,
    ) -> Result<Self> {
        let norm = |v: Vec<S>, kind: &'static str| -> Result<Vec<String>> {
            let mut out: Vec<String> = v.into_iter().map(Into::into).collect();
            if out.is_empty() {
                return Err(QmwbError::Domain(format!("{kind} command set is empty")));
            }
            for l in &out {
                check_label(kind, l)?;
            }
            out.sort();
            out.dedup();
            Ok(out)
        };
        Ok(CommandSet {
            alice: norm(alice, "alice")?,
            bob: norm(bob, "bob")?,
            eve: norm(eve, "eve")?,
        })
    }

    pub fn alice(&self) -> &[String] {
        &self.alice
    }
    pub fn bob(&self) -> &[String] {
        &self.bob
    }
    pub fn eve(&self) -> &[String] {
        &self.eve
    }

    pub fn contains(&self, c: &Command) -> bool {
        self.alice.binary_search(&c.alice).is_ok()
            && self.bob.binary_search(&c.bob).is_ok()
            && self.eve.binary_search(&c.eve).is_ok()
    }

    /// First component label not present in `other`, if any.
    pub fn stray_label<'a>(&'a self, other: &CommandSet) -> Option<(&'static str, &'a str)> {
        for a in &self.alice {
            if !other.alice.contains(a) {
                return Some(("alice", a));
            }
        }
        for b in &self.bob {
            if !other.bob.contains(b) {
                return Some(("bob", b));
            }
        }
        for e in &self.eve {
            if !other.eve.contains(e) {
                return Some(("eve", e));
            }
        }
        None
    }

    pub fn is_subset_of(&self, other: &CommandSet) -> bool {
        self.stray_label(other).is_none()
    }

    /// All command triples in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = Command> + '_ {
        self.alice.iter().flat_map(move |a| {
            self.bob.iter().flat_map(move |b| {
                self.eve
                    .iter()
                    .map(move |e| Command::new(a.clone(), b.clone(), e.clone()))
            })
        })
    }

    pub fn len(&self) -> usize {
        self.alice.len() * self.bob.len() * self.eve.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A positive operator-valued measure: one detection operator per outcome
/// label, outcomes kept in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    outcomes: Vec<String>,
    elements: Vec<CMatrix>,
}

impl Povm {
    pub fn new<S: Into<String>>(parts: Vec<(S, CMatrix)>) -> Result<Self> {
        if parts.is_empty() {
            return Err(QmwbError::Domain("POVM has no outcomes".into()));
        }
        let mut labeled: Vec<(String, CMatrix)> =
            parts.into_iter().map(|(s, m)| (s.into(), m)).collect();
        for (l, m) in &labeled {
            check_label("outcome", l)?;
            if m.nrows() != m.ncols() {
                return Err(QmwbError::Shape(format!(
                    "detection operator for outcome `{l}` is not square"
                )));
            }
        }
        labeled.sort_by(|a, b| a.0.cmp(&b.0));
        for w in labeled.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(QmwbError::Domain(format!(
                    "duplicate outcome label `{}`",
                    w[0].0
                )));
            }
        }
        let (outcomes, elements) = labeled.into_iter().unzip();
        Ok(Povm { outcomes, elements })
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn elements(&self) -> &[CMatrix] {
        &self.elements
    }

    pub fn element(&self, outcome: &str) -> Result<&CMatrix> {
        self.outcomes
            .iter()
            .position(|o| o == outcome)
            .map(|i| &self.elements[i])
            .ok_or_else(|| QmwbError::UnknownLabel {
                kind: "outcome",
                label: outcome.to_string(),
            })
    }

    pub fn dim(&self) -> usize {
        self.elements[0].nrows()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &CMatrix)> {
        self.outcomes.iter().zip(self.elements.iter())
    }
}

/// One invariant violation found by [`QmModel::validate`].
#[derive(Debug, Clone)]
pub struct Violation {
    /// Which object violates the invariant (command, state label, ...).
    pub location: String,
    pub description: String,
    pub deviation: f64,
}

/// Result of validating a model: empty iff all invariants hold.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            writeln!(f, "valid")?;
        }
        for v in &self.violations {
            writeln!(
                f,
                "violation\t{}\t{}\tdeviation {:e}",
                v.location, v.description, v.deviation
            )?;
        }
        Ok(())
    }
}

/// A quantum model of CPC-commanded devices: states indexed by Alice's
/// command, unitaries by the full triple (identity when absent), POVMs by
/// the Bob/Eve pair.
#[derive(Debug, Clone, PartialEq)]
pub struct QmModel {
    dim: usize,
    commands: CommandSet,
    states: BTreeMap<String, CVector>,
    unitaries: BTreeMap<Command, CMatrix>,
    povms: BTreeMap<(String, String), Povm>,
    /// Eve commands that the trial engine should schedule only for Eve-side
    /// runs, never for Alice/Bob protocol traffic.
    eve_private: BTreeSet<String>,
    pub tol: Tolerances,
}

impl QmModel {
    pub fn new(
        dim: usize,
        commands: CommandSet,
        states: BTreeMap<String, CVector>,
        unitaries: BTreeMap<Command, CMatrix>,
        povms: BTreeMap<(String, String), Povm>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(QmwbError::Parameter("dimension must be positive".into()));
        }
        for a in commands.alice() {
            let v = states.get(a).ok_or_else(|| {
                QmwbError::Domain(format!("no state attached to alice command `{a}`"))
            })?;
            if v.len() != dim {
                return Err(QmwbError::Shape(format!(
                    "state for `{a}` has dimension {}, model has {dim}",
                    v.len()
                )));
            }
        }
        for b in commands.bob() {
            for e in commands.eve() {
                let p = povms.get(&(b.clone(), e.clone())).ok_or_else(|| {
                    QmwbError::Domain(format!("no POVM attached to command pair ({b},{e})"))
                })?;
                if p.dim() != dim {
                    return Err(QmwbError::Shape(format!(
                        "POVM for ({b},{e}) has dimension {}, model has {dim}",
                        p.dim()
                    )));
                }
            }
        }
        for (c, u) in &unitaries {
            if !commands.contains(c) {
                return Err(QmwbError::Domain(format!(
                    "unitary attached to unknown command {c}"
                )));
            }
            if u.nrows() != dim || u.ncols() != dim {
                return Err(QmwbError::Shape(format!(
                    "unitary for {c} has shape {}x{}, model has dimension {dim}",
                    u.nrows(),
                    u.ncols()
                )));
            }
        }
        Ok(QmModel {
            dim,
            commands,
            states,
            unitaries,
            povms,
            eve_private: BTreeSet::new(),
            tol: Tolerances::DEFAULT,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn commands(&self) -> &CommandSet {
        &self.commands
    }
    pub fn eve_private(&self) -> &BTreeSet<String> {
        &self.eve_private
    }
    pub fn set_eve_private(&mut self, labels: BTreeSet<String>) {
        self.eve_private = labels;
    }

    pub fn state(&self, alice: &str) -> Result<&CVector> {
        self.states.get(alice).ok_or_else(|| QmwbError::UnknownLabel {
            kind: "alice command",
            label: alice.to_string(),
        })
    }

    pub fn states(&self) -> &BTreeMap<String, CVector> {
        &self.states
    }

    /// Explicit unitary for a command, if one is attached; `None` means the
    /// identity (which is never materialized, so Born-rule evaluation of
    /// identity-evolution models stays bit-exact under block embedding).
    pub fn unitary(&self, command: &Command) -> Option<&CMatrix> {
        self.unitaries.get(command)
    }

    pub fn povm(&self, bob: &str, eve: &str) -> Result<&Povm> {
        self.povms
            .get(&(bob.to_string(), eve.to_string()))
            .ok_or_else(|| QmwbError::UnknownLabel {
                kind: "bob/eve command pair",
                label: format!("({bob},{eve})"),
            })
    }

    pub fn povms(&self) -> &BTreeMap<(String, String), Povm> {
        &self.povms
    }

    /// Union of all outcome labels across POVMs.
    pub fn outcome_set(&self) -> BTreeSet<String> {
        self.povms
            .values()
            .flat_map(|p| p.outcomes().iter().cloned())
            .collect()
    }

    /// Probability of `outcome` under `command`: the expectation of the
    /// evolved detection operator in the prepared state, clamped to [0,1]
    /// after checking that the imaginary residue is below tolerance.
    pub fn born_probability(&self, command: &Command, outcome: &str) -> Result<f64> {
        if !self.commands.contains(command) {
            return Err(QmwbError::UnknownLabel {
                kind: "command",
                label: command.to_string(),
            });
        }
        let v = self.state(&command.alice)?;
        let m = self.povm(&command.bob, &command.eve)?.element(outcome)?;
        let z = match self.unitary(command) {
            Some(u) => {
                let evolved = adjoint_apply(u, v);
                quadratic_form(m, &evolved)
            }
            None => quadratic_form(m, v),
        };
        if z.im.abs() > self.tol.imag_residue {
            return Err(QmwbError::ImaginaryResidue {
                command: command.to_string(),
                outcome: outcome.to_string(),
                residue: z.im.abs(),
            });
        }
        Ok(z.re.clamp(0.0, 1.0))
    }

    /// Full outcome distribution for one command, in lexicographic outcome
    /// order.
    pub fn outcome_distribution(&self, command: &Command) -> Result<Vec<(String, f64)>> {
        let povm = self.povm(&command.bob, &command.eve)?;
        povm.outcomes()
            .iter()
            .map(|o| Ok((o.clone(), self.born_probability(command, o)?)))
            .collect()
    }

    /// One distribution row per command, commands in lexicographic order.
    pub fn probability_table(&self) -> Result<BTreeMap<Command, Vec<(String, f64)>>> {
        self.commands
            .iter()
            .map(|c| Ok((c.clone(), self.outcome_distribution(&c)?)))
            .collect()
    }

    /// Check every model invariant at the configured tolerances; never
    /// aborts, always reports.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let tol = &self.tol;
        for (a, v) in &self.states {
            let dev = (v.norm() - 1.0).abs();
            if dev > tol.unit_norm {
                report.violations.push(Violation {
                    location: format!("state {a}"),
                    description: "state vector is not unit norm".into(),
                    deviation: dev,
                });
            }
        }
        for (c, u) in &self.unitaries {
            let (dev, at) = unitarity_deviation(u);
            if dev > tol.unitary {
                report.violations.push(Violation {
                    location: format!("unitary {c}"),
                    description: format!("U U+ deviates from identity at entry {at:?}"),
                    deviation: dev,
                });
            }
        }
        for ((b, e), povm) in &self.povms {
            let mut sum = CMatrix::zeros(povm.dim(), povm.dim());
            for (o, m) in povm.iter() {
                sum += m;
                let hdev = hermiticity_deviation(m);
                if hdev > tol.hermitian {
                    report.violations.push(Violation {
                        location: format!("povm ({b},{e}) outcome {o}"),
                        description: "detection operator is not Hermitian".into(),
                        deviation: hdev,
                    });
                } else {
                    let min_eig = hermitian_eigenvalues(m)[0];
                    if min_eig < tol.psd_eigenvalue {
                        report.violations.push(Violation {
                            location: format!("povm ({b},{e}) outcome {o}"),
                            description: "detection operator is not PSD".into(),
                            deviation: -min_eig,
                        });
                    }
                }
            }
            let (dev, at) = linalg::max_deviation_from(&sum, &linalg::identity(povm.dim()));
            if dev > tol.povm_sum {
                report.violations.push(Violation {
                    location: format!("povm ({b},{e})"),
                    description: format!("element sum deviates from identity at entry {at:?}"),
                    deviation: dev,
                });
            }
        }
        // Probability normalization per command.
        for c in self.commands.iter() {
            match self.outcome_distribution(&c) {
                Ok(dist) => {
                    let total: f64 = dist.iter().map(|(_, p)| p).sum();
                    let dev = (total - 1.0).abs();
                    if dev > tol.prob_sum {
                        report.violations.push(Violation {
                            location: format!("command {c}"),
                            description: "outcome probabilities do not sum to 1".into(),
                            deviation: dev,
                        });
                    }
                }
                Err(err) => report.violations.push(Violation {
                    location: format!("command {c}"),
                    description: err.to_string(),
                    deviation: f64::NAN,
                }),
            }
        }
        report
    }

    /// The same model cut down to a subset of commands. Retained rows of the
    /// probability table are bitwise identical to the original's.
    pub fn restrict(&self, subset: &CommandSet) -> Result<QmModel> {
        if let Some((kind, label)) = subset.stray_label(&self.commands) {
            return Err(QmwbError::Domain(format!(
                "restriction {kind} label `{label}` is not a command of the model"
            )));
        }
        let states = subset
            .alice()
            .iter()
            .map(|a| (a.clone(), self.states[a].clone()))
            .collect();
        let povms = subset
            .bob()
            .iter()
            .flat_map(|b| {
                subset.eve().iter().map(move |e| {
                    let key = (b.clone(), e.clone());
                    (key.clone(), self.povms[&key].clone())
                })
            })
            .collect();
        let unitaries = self
            .unitaries
            .iter()
            .filter(|(c, _)| subset.contains(c))
            .map(|(c, u)| (c.clone(), u.clone()))
            .collect();
        let mut out = QmModel::new(self.dim, subset.clone(), states, unitaries, povms)?;
        out.eve_private = self
            .eve_private
            .iter()
            .filter(|l| subset.eve().contains(l))
            .cloned()
            .collect();
        out.tol = self.tol;
        Ok(out)
    }

    /// Magnitudes of pairwise inner products of Alice's states, indexed by
    /// the sorted Alice labels.
    pub fn overlap_matrix(&self) -> (Vec<String>, Vec<Vec<f64>>) {
        let labels: Vec<String> = self.commands.alice().to_vec();
        let n = labels.len();
        let mut s = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                s[i][j] = inner(&self.states[&labels[i]], &self.states[&labels[j]]).norm();
            }
        }
        (labels, s)
    }

    /// Overlap between two named Alice states.
    pub fn overlap(&self, a: &str, b: &str) -> Result<f64> {
        Ok(inner(self.state(a)?, self.state(b)?).norm())
    }

    // ---- text format ------------------------------------------------------

    /// Canonical text serialization. Deterministic: sorted labels, shortest
    /// round-tripping float formatting.
    pub fn to_text(&self) -> String {
        let mut out = String::from("qmwb-model v1\n");
        out.push_str(&format!("dim {}\n", self.dim));
        out.push_str(&format!("alice {}\n", self.commands.alice().join(" ")));
        out.push_str(&format!("bob {}\n", self.commands.bob().join(" ")));
        out.push_str(&format!("eve {}\n", self.commands.eve().join(" ")));
        if !self.eve_private.is_empty() {
            let labels: Vec<&str> = self.eve_private.iter().map(String::as_str).collect();
            out.push_str(&format!("eve-private {}\n", labels.join(" ")));
        }
        for (a, v) in &self.states {
            out.push_str(&format!("state {a}"));
            for z in v.iter() {
                out.push_str(&format!(" {:?} {:?}", z.re, z.im));
            }
            out.push('\n');
        }
        for (c, u) in &self.unitaries {
            out.push_str(&format!("unitary {} {} {}", c.alice, c.bob, c.eve));
            push_matrix(&mut out, u);
            out.push('\n');
        }
        for ((b, e), povm) in &self.povms {
            for (o, m) in povm.iter() {
                out.push_str(&format!("povm {b} {e} {o}"));
                push_matrix(&mut out, m);
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<QmModel> {
        let mut dim: Option<usize> = None;
        let mut alice: Option<Vec<String>> = None;
        let mut bob: Option<Vec<String>> = None;
        let mut eve: Option<Vec<String>> = None;
        let mut eve_private: BTreeSet<String> = BTreeSet::new();
        let mut states = BTreeMap::new();
        let mut unitaries = BTreeMap::new();
        let mut povm_parts: BTreeMap<(String, String), Vec<(String, CMatrix)>> = BTreeMap::new();
        let mut saw_header = false;

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if line != "qmwb-model v1" {
                    return Err(QmwbError::Parse {
                        line: lineno,
                        message: format!("expected header `qmwb-model v1`, got `{line}`"),
                    });
                }
                saw_header = true;
                continue;
            }
            let mut fields = line.split_whitespace();
            let key = fields.next().unwrap();
            let rest: Vec<&str> = fields.collect();
            let err = |message: String| QmwbError::Parse {
                line: lineno,
                message,
            };
            match key {
                "dim" => {
                    let d = rest
                        .first()
                        .and_then(|s| s.parse::<usize>().ok())
                        .ok_or_else(|| err("malformed dim line".into()))?;
                    dim = Some(d);
                }
                "alice" => alice = Some(rest.iter().map(|s| s.to_string()).collect()),
                "bob" => bob = Some(rest.iter().map(|s| s.to_string()).collect()),
                "eve" => eve = Some(rest.iter().map(|s| s.to_string()).collect()),
                "eve-private" => {
                    eve_private = rest.iter().map(|s| s.to_string()).collect();
                }
                "state" => {
                    let d = dim.ok_or_else(|| err("state line before dim".into()))?;
                    if rest.len() != 1 + 2 * d {
                        return Err(err(format!(
                            "state line needs label plus {} floats, got {} fields",
                            2 * d,
                            rest.len()
                        )));
                    }
                    let v = parse_floats(&rest[1..], lineno)?;
                    let vec = CVector::from_iterator(
                        d,
                        v.chunks(2).map(|p| Complex64::new(p[0], p[1])),
                    );
                    states.insert(rest[0].to_string(), vec);
                }
                "unitary" => {
                    let d = dim.ok_or_else(|| err("unitary line before dim".into()))?;
                    if rest.len() != 3 + 2 * d * d {
                        return Err(err("malformed unitary line".into()));
                    }
                    let m = parse_matrix(&rest[3..], d, lineno)?;
                    unitaries.insert(Command::new(rest[0], rest[1], rest[2]), m);
                }
                "povm" => {
                    let d = dim.ok_or_else(|| err("povm line before dim".into()))?;
                    if rest.len() != 3 + 2 * d * d {
                        return Err(err("malformed povm line".into()));
                    }
                    let m = parse_matrix(&rest[3..], d, lineno)?;
                    povm_parts
                        .entry((rest[0].to_string(), rest[1].to_string()))
                        .or_default()
                        .push((rest[2].to_string(), m));
                }
                other => {
                    return Err(err(format!("unknown record kind `{other}`")));
                }
            }
        }
        if !saw_header {
            return Err(QmwbError::Parse {
                line: 1,
                message: "missing model header".into(),
            });
        }
        let dim = dim.ok_or(QmwbError::Parse {
            line: 0,
            message: "missing dim line".into(),
        })?;
        let commands = CommandSet::new(
            alice.ok_or(QmwbError::Parse {
                line: 0,
                message: "missing alice line".into(),
            })?,
            bob.ok_or(QmwbError::Parse {
                line: 0,
                message: "missing bob line".into(),
            })?,
            eve.ok_or(QmwbError::Parse {
                line: 0,
                message: "missing eve line".into(),
            })?,
        )?;
        let povms = povm_parts
            .into_iter()
            .map(|(k, parts)| Ok((k, Povm::new(parts)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let mut model = QmModel::new(dim, commands, states, unitaries, povms)?;
        model.eve_private = eve_private;
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<QmModel> {
        QmModel::from_text(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical serialization; used as the model id in run
    /// logs and provenance headers.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn push_matrix(out: &mut String, m: &CMatrix) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            out.push_str(&format!(" {:?} {:?}", z.re, z.im));
        }
    }
}

fn parse_floats(fields: &[&str], lineno: usize) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|s| {
            s.parse::<f64>().map_err(|_| QmwbError::Parse {
                line: lineno,
                message: format!("bad float `{s}`"),
            })
        })
        .collect()
}

fn parse_matrix(fields: &[&str], dim: usize, lineno: usize) -> Result<CMatrix> {
    let v = parse_floats(fields, lineno)?;
    Ok(CMatrix::from_fn(dim, dim, |i, j| {
        let k = 2 * (i * dim + j);
        C64::new(v[k], v[k + 1])
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn ket(entries: &[f64]) -> CVector {
        CVector::from_iterator(entries.len(), entries.iter().map(|&x| C64::new(x, 0.0)))
    }

    fn diag(entries: &[f64]) -> CMatrix {
        CMatrix::from_fn(entries.len(), entries.len(), |i, j| {
            if i == j {
                C64::new(entries[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    fn single_povm_model(povm: Povm, states: Vec<(&str, CVector)>) -> QmModel {
        let dim = povm.dim();
        let alice: Vec<String> = states.iter().map(|(a, _)| a.to_string()).collect();
        let commands =
            CommandSet::new(alice, vec!["b".to_string()], vec!["e".to_string()]).unwrap();
        let states = states
            .into_iter()
            .map(|(a, v)| (a.to_string(), v))
            .collect();
        let mut povms = BTreeMap::new();
        povms.insert(("b".to_string(), "e".to_string()), povm);
        QmModel::new(dim, commands, states, BTreeMap::new(), povms).unwrap()
    }

    #[test]
    fn identity_povm_is_valid() {
        let povm = Povm::new(vec![("only", identity(2))]).unwrap();
        let model = single_povm_model(povm, vec![("a0", ket(&[1.0, 0.0]))]);
        assert!(model.validate().is_valid());
    }

    #[test]
    fn projective_povm_is_valid() {
        let povm = Povm::new(vec![
            ("o0", diag(&[1.0, 0.0])),
            ("o1", diag(&[0.0, 1.0])),
        ])
        .unwrap();
        let model = single_povm_model(povm, vec![("a0", ket(&[1.0, 0.0]))]);
        assert!(model.validate().is_valid());
    }

    #[test]
    fn duplicated_projector_breaks_completeness_by_one() {
        let povm = Povm::new(vec![
            ("o0", diag(&[1.0, 0.0])),
            ("o1", diag(&[1.0, 0.0])),
        ])
        .unwrap();
        let model = single_povm_model(povm, vec![("a0", ket(&[1.0, 0.0]))]);
        let report = model.validate();
        assert!(!report.is_valid());
        let completeness = report
            .violations
            .iter()
            .find(|v| v.description.contains("element sum"))
            .expect("completeness violation reported");
        assert!((completeness.deviation - 1.0).abs() < 1e-15);
    }

    #[test]
    fn born_probability_projector_on_state() {
        let povm = Povm::new(vec![
            ("o0", diag(&[1.0, 0.0])),
            ("o1", diag(&[0.0, 1.0])),
        ])
        .unwrap();
        let model = single_povm_model(
            povm,
            vec![
                ("a0", ket(&[1.0, 0.0])),
                ("a1", ket(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2])),
            ],
        );
        let c0 = Command::new("a0", "b", "e");
        let c1 = Command::new("a1", "b", "e");
        assert_eq!(model.born_probability(&c0, "o0").unwrap(), 1.0);
        assert!((model.born_probability(&c1, "o0").unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unknown_labels_are_reported() {
        let povm = Povm::new(vec![("only", identity(2))]).unwrap();
        let model = single_povm_model(povm, vec![("a0", ket(&[1.0, 0.0]))]);
        let bad_cmd = Command::new("zz", "b", "e");
        assert!(matches!(
            model.born_probability(&bad_cmd, "only"),
            Err(QmwbError::UnknownLabel { .. })
        ));
        let good_cmd = Command::new("a0", "b", "e");
        assert!(matches!(
            model.born_probability(&good_cmd, "nope"),
            Err(QmwbError::UnknownLabel { .. })
        ));
    }

    #[test]
    fn global_phase_leaves_probabilities_unchanged() {
        let povm = Povm::new(vec![
            ("o0", diag(&[1.0, 0.0])),
            ("o1", diag(&[0.0, 1.0])),
        ])
        .unwrap();
        let theta = PI / 8.0;
        let state = ket(&[theta.cos(), theta.sin()]);
        let model = single_povm_model(povm.clone(), vec![("a0", state.clone())]);
        let phase = C64::from_polar(1.0, 1.234);
        let rotated = state.map(|z| z * phase);
        let model2 = single_povm_model(povm, vec![("a0", rotated)]);
        let cmd = Command::new("a0", "b", "e");
        for o in ["o0", "o1"] {
            let p1 = model.born_probability(&cmd, o).unwrap();
            let p2 = model2.born_probability(&cmd, o).unwrap();
            assert!((p1 - p2).abs() < 1e-12);
        }
    }

    #[test]
    fn restriction_commutes_with_table() {
        let povm = Povm::new(vec![
            ("o0", diag(&[1.0, 0.0])),
            ("o1", diag(&[0.0, 1.0])),
        ])
        .unwrap();
        let model = single_povm_model(
            povm,
            vec![
                ("a0", ket(&[1.0, 0.0])),
                ("a1", ket(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2])),
            ],
        );
        let subset = CommandSet::new(vec!["a0"], vec!["b"], vec!["e"]).unwrap();
        let restricted = model.restrict(&subset).unwrap();
        let full = model.probability_table().unwrap();
        let small = restricted.probability_table().unwrap();
        for (cmd, row) in &small {
            let orig = &full[cmd];
            assert_eq!(row.len(), orig.len());
            for ((o1, p1), (o2, p2)) in row.iter().zip(orig.iter()) {
                assert_eq!(o1, o2);
                assert_eq!(p1.to_bits(), p2.to_bits());
            }
        }
    }

    #[test]
    fn restrict_rejects_stray_labels() {
        let povm = Povm::new(vec![("only", identity(2))]).unwrap();
        let model = single_povm_model(povm, vec![("a0", ket(&[1.0, 0.0]))]);
        let stray = CommandSet::new(vec!["other"], vec!["b"], vec!["e"]).unwrap();
        let err = model.restrict(&stray).unwrap_err();
        assert!(err.to_string().contains("other"));
    }

    #[test]
    fn overlap_matrix_b92_pair() {
        let theta = PI / 8.0;
        let povm = Povm::new(vec![("only", identity(2))]).unwrap();
        let model = single_povm_model(
            povm,
            vec![
                ("s0", ket(&[theta.cos(), theta.sin()])),
                ("s1", ket(&[theta.cos(), -theta.sin()])),
            ],
        );
        let (_, s) = model.overlap_matrix();
        assert!((s[0][0] - 1.0).abs() < 1e-12);
        assert!((s[0][1] - (2.0 * theta).cos()).abs() < 1e-12);
        assert!((s[0][1] - s[1][0]).abs() < 1e-15);
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let theta = PI / 8.0;
        let povm = Povm::new(vec![
            ("o0", diag(&[1.0, 0.0])),
            ("o1", diag(&[0.0, 1.0])),
        ])
        .unwrap();
        let model = single_povm_model(
            povm,
            vec![("s0", ket(&[theta.cos(), theta.sin()]))],
        );
        let text = model.to_text();
        let loaded = QmModel::from_text(&text).unwrap();
        assert_eq!(loaded.to_text(), text);
        assert_eq!(loaded.content_hash(), model.content_hash());
        let v0 = model.state("s0").unwrap();
        let v1 = loaded.state("s0").unwrap();
        for i in 0..2 {
            assert_eq!(v0[i].re.to_bits(), v1[i].re.to_bits());
        }
    }

    #[test]
    fn malformed_lines_name_the_line() {
        let text = "qmwb-model v1\ndim 2\nalice a0\nbob b\neve e\nstate a0 1 0 0\n";
        match QmModel::from_text(text) {
            Err(QmwbError::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
