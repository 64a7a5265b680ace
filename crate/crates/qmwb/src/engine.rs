//! Deterministic trial runner and append-only run logs.
//!
//! Outcomes are sampled by inverse CDF over the lexicographically ordered
//! outcome set, driven by a pinned counter-based generator (ChaCha8) whose
//! stream position is recorded per trial. Identical inputs give bit-identical
//! logs.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discrimination::{entropy, Prior};
use crate::error::{QmwbError, Result};
use crate::model::{Command, CommandSet, QmModel};

pub const RNG_NAME: &str = "chacha8";
pub const LOG_HEADER: &str = "qmwb-log v1";

/// One recorded trial: the concatenated command, the sampled outcome, and
/// the generator's word position at the start of the trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialRecord {
    pub index: u64,
    pub command: Command,
    pub outcome: String,
    pub stream_position: u128,
}

/// Append-only record of a run, tied to the generating model by content
/// hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLog {
    pub model_id: String,
    pub seed: u64,
    pub rng_name: String,
    pub records: Vec<TrialRecord>,
}

/// Chooses the next command from the history so far. Policies run inside the
/// trial loop and may draw from the run's generator, which keeps the whole
/// run reproducible from the seed.
pub trait FeedbackPolicy {
    fn name(&self) -> &str;
    fn next_command(
        &mut self,
        history: &[TrialRecord],
        commands: &CommandSet,
        rng: &mut ChaCha8Rng,
    ) -> Command;
}

/// How commands are assigned to trials.
pub enum Schedule {
    /// Cycle through a fixed command list.
    Fixed(Vec<Command>),
    Policy(Box<dyn FeedbackPolicy>),
}

/// Samples each command component independently: Alice and Bob uniform,
/// Eve according to explicit weights.
pub struct RandomCommandPolicy {
    alice: Vec<String>,
    bob: Vec<String>,
    eve_cdf: Vec<(String, f64)>,
}

impl RandomCommandPolicy {
    pub fn new(model: &QmModel, eve_weights: Vec<(String, f64)>) -> Result<Self> {
        let total: f64 = eve_weights.iter().map(|(_, w)| w).sum();
        if eve_weights.is_empty() || (total - 1.0).abs() > 1e-9 {
            return Err(QmwbError::Parameter(format!(
                "eve weights sum to {total}, not 1"
            )));
        }
        let mut acc = 0.0;
        let mut eve_cdf = Vec::with_capacity(eve_weights.len());
        for (label, w) in eve_weights {
            if !model.commands().eve().contains(&label) {
                return Err(QmwbError::UnknownLabel {
                    kind: "eve command",
                    label,
                });
            }
            acc += w;
            eve_cdf.push((label, acc));
        }
        Ok(RandomCommandPolicy {
            alice: model.commands().alice().to_vec(),
            bob: model.commands().bob().to_vec(),
            eve_cdf,
        })
    }

    /// Uniform over every Eve command that is not Eve-private.
    pub fn protocol_uniform(model: &QmModel) -> Result<Self> {
        let public: Vec<String> = model
            .commands()
            .eve()
            .iter()
            .filter(|e| !model.eve_private().contains(*e))
            .cloned()
            .collect();
        let w = 1.0 / public.len() as f64;
        Self::new(model, public.into_iter().map(|e| (e, w)).collect())
    }
}

impl FeedbackPolicy for RandomCommandPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn next_command(
        &mut self,
        _history: &[TrialRecord],
        _commands: &CommandSet,
        rng: &mut ChaCha8Rng,
    ) -> Command {
        let a = &self.alice[rng.gen_range(0..self.alice.len())];
        let b = &self.bob[rng.gen_range(0..self.bob.len())];
        let u: f64 = rng.gen();
        let e = self
            .eve_cdf
            .iter()
            .find(|(_, c)| u < *c)
            .map(|(l, _)| l)
            .unwrap_or(&self.eve_cdf.last().unwrap().0);
        Command::new(a.clone(), b.clone(), e.clone())
    }
}

/// Run `n` trials against a model, sampling each outcome from its Born-rule
/// distribution.
pub fn run_trials(
    model: &QmModel,
    mut schedule: Schedule,
    n: u64,
    seed: u64,
) -> Result<RunLog> {
    if n == 0 {
        return Err(QmwbError::Parameter("trial count must be positive".into()));
    }
    if let Schedule::Fixed(cmds) = &schedule {
        if cmds.is_empty() {
            return Err(QmwbError::Parameter("fixed schedule is empty".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records: Vec<TrialRecord> = Vec::with_capacity(n as usize);
    // Cumulative outcome distributions, computed once per distinct command.
    let mut cdf_cache: BTreeMap<Command, Vec<(String, f64)>> = BTreeMap::new();
    for index in 0..n {
        let stream_position = rng.get_word_pos();
        let command = match &mut schedule {
            Schedule::Fixed(cmds) => cmds[(index as usize) % cmds.len()].clone(),
            Schedule::Policy(policy) => {
                policy.next_command(&records, model.commands(), &mut rng)
            }
        };
        if !model.commands().contains(&command) {
            return Err(QmwbError::Policy {
                trial: index,
                command: command.to_string(),
            });
        }
        if !cdf_cache.contains_key(&command) {
            let dist = model.outcome_distribution(&command)?;
            let mut acc = 0.0;
            let cdf = dist
                .into_iter()
                .map(|(o, p)| {
                    acc += p;
                    (o, acc)
                })
                .collect();
            cdf_cache.insert(command.clone(), cdf);
        }
        let cdf = &cdf_cache[&command];
        let u: f64 = rng.gen();
        let outcome = cdf
            .iter()
            .find(|(_, c)| u < *c)
            .map(|(o, _)| o)
            .unwrap_or(&cdf.last().unwrap().0)
            .clone();
        records.push(TrialRecord {
            index,
            command,
            outcome,
            stream_position,
        });
    }
    Ok(RunLog {
        model_id: model.content_hash(),
        seed,
        rng_name: RNG_NAME.to_string(),
        records,
    })
}

/// Outcome counts for one command.
#[derive(Debug, Clone, Default)]
pub struct CommandCounts {
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
}

impl CommandCounts {
    pub fn frequency(&self, outcome: &str) -> f64 {
        self.counts.get(outcome).copied().unwrap_or(0) as f64 / self.total as f64
    }
}

/// Per-command relative frequencies of a run log.
pub fn empirical_frequencies(log: &RunLog) -> Result<BTreeMap<Command, CommandCounts>> {
    if log.records.is_empty() {
        return Err(QmwbError::InsufficientData("empty run log".into()));
    }
    let mut out: BTreeMap<Command, CommandCounts> = BTreeMap::new();
    for rec in &log.records {
        let entry = out.entry(rec.command.clone()).or_default();
        *entry.counts.entry(rec.outcome.clone()).or_insert(0) += 1;
        entry.total += 1;
    }
    Ok(out)
}

/// Predicted vs observed distribution for one command.
#[derive(Debug, Clone)]
pub struct CommandFit {
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
    pub predicted: Vec<(String, f64)>,
    /// Total-variation distance between predicted and empirical rows.
    pub tv: f64,
}

/// Fit of a model against a run log: per-command total-variation distances.
/// No accept/reject verdict is baked in.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub per_command: BTreeMap<Command, CommandFit>,
    pub max_tv: f64,
    /// Smallest per-command sample size.
    pub n_min: u64,
    /// Set when the log's model hash differs from the fitted model's.
    pub model_id_mismatch: bool,
}

/// Compare a model's predicted distributions with a log's relative
/// frequencies command by command.
pub fn fit_model(model: &QmModel, log: &RunLog) -> Result<FitReport> {
    let freqs = empirical_frequencies(log)?;
    let mut per_command = BTreeMap::new();
    let mut max_tv = 0.0f64;
    let mut n_min = u64::MAX;
    for (cmd, counts) in freqs {
        if !model.commands().contains(&cmd) {
            return Err(QmwbError::Domain(format!(
                "log command {cmd} is absent from the model"
            )));
        }
        let predicted = model.outcome_distribution(&cmd)?;
        let mut tv = 0.0;
        for (o, p) in &predicted {
            tv += (p - counts.frequency(o)).abs();
        }
        for (o, &c) in &counts.counts {
            if !predicted.iter().any(|(po, _)| po == o) {
                tv += c as f64 / counts.total as f64;
            }
        }
        tv *= 0.5;
        if tv > max_tv {
            max_tv = tv;
        }
        n_min = n_min.min(counts.total);
        per_command.insert(
            cmd,
            CommandFit {
                counts: counts.counts,
                total: counts.total,
                predicted,
                tv,
            },
        );
    }
    Ok(FitReport {
        per_command,
        max_tv,
        n_min,
        model_id_mismatch: log.model_id != model.content_hash(),
    })
}

impl RunLog {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{LOG_HEADER}\t{}\t{}\t{}\n",
            self.model_id, self.seed, self.rng_name
        );
        for rec in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                rec.index,
                rec.command.alice,
                rec.command.bob,
                rec.command.eve,
                rec.outcome,
                rec.stream_position
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<RunLog> {
        let mut log: Option<RunLog> = None;
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            match &mut log {
                None => {
                    if fields.len() != 4 || fields[0] != LOG_HEADER {
                        return Err(QmwbError::Parse {
                            line: lineno,
                            message: format!("bad log header `{raw}`"),
                        });
                    }
                    let seed = fields[2].parse::<u64>().map_err(|_| QmwbError::Parse {
                        line: lineno,
                        message: format!("bad seed `{}`", fields[2]),
                    })?;
                    log = Some(RunLog {
                        model_id: fields[1].to_string(),
                        seed,
                        rng_name: fields[3].to_string(),
                        records: Vec::new(),
                    });
                }
                Some(log) => {
                    if fields.len() != 6 {
                        return Err(QmwbError::Parse {
                            line: lineno,
                            message: format!(
                                "record needs 6 tab-separated fields, got {}",
                                fields.len()
                            ),
                        });
                    }
                    let parse_err = |what: &str| QmwbError::Parse {
                        line: lineno,
                        message: format!("bad {what} field"),
                    };
                    log.records.push(TrialRecord {
                        index: fields[0].parse().map_err(|_| parse_err("index"))?,
                        command: Command::new(fields[1], fields[2], fields[3]),
                        outcome: fields[4].to_string(),
                        stream_position: fields[5]
                            .parse()
                            .map_err(|_| parse_err("stream position"))?,
                    });
                }
            }
        }
        log.ok_or(QmwbError::Parse {
            line: 1,
            message: "empty log file".into(),
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<RunLog> {
        RunLog::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Eve-side feedback: keeps a Bayes posterior over Alice's command from the
/// history and picks the measurement command minimizing the expected
/// posterior entropy, ties broken lexicographically.
pub struct GreedyDiscriminationPolicy {
    model: QmModel,
    prior: Prior,
    /// The fixed (externally chosen, unknown-to-Eve) Alice command the run
    /// keeps transmitting.
    alice_command: String,
}

impl GreedyDiscriminationPolicy {
    pub fn new(model: QmModel, prior: Prior, alice_command: impl Into<String>) -> Result<Self> {
        let alice_command = alice_command.into();
        if !model.commands().alice().contains(&alice_command) {
            return Err(QmwbError::UnknownLabel {
                kind: "alice command",
                label: alice_command,
            });
        }
        Ok(GreedyDiscriminationPolicy {
            model,
            prior,
            alice_command,
        })
    }

    /// Posterior over Alice's commands after a sequence of trials, treating
    /// the transmitted command as fixed across trials.
    pub fn posterior(&self, history: &[TrialRecord]) -> BTreeMap<String, f64> {
        let mut weights: BTreeMap<String, f64> = self
            .model
            .commands()
            .alice()
            .iter()
            .map(|a| (a.clone(), self.prior.weight(a)))
            .collect();
        for rec in history {
            let mut total = 0.0;
            let mut next = BTreeMap::new();
            for (a, w) in &weights {
                let cmd = Command::new(a.clone(), rec.command.bob.clone(), rec.command.eve.clone());
                let lik = self.model.born_probability(&cmd, &rec.outcome).unwrap_or(0.0);
                let nw = w * lik;
                total += nw;
                next.insert(a.clone(), nw);
            }
            if total > 0.0 {
                weights = next.into_iter().map(|(a, w)| (a, w / total)).collect();
            }
        }
        weights
    }

    fn expected_entropy(&self, posterior: &BTreeMap<String, f64>, bob: &str, eve: &str) -> f64 {
        let povm = match self.model.povm(bob, eve) {
            Ok(p) => p,
            Err(_) => return f64::INFINITY,
        };
        let mut expected = 0.0;
        for o in povm.outcomes() {
            let mut marginal = 0.0;
            let mut cond: BTreeMap<String, f64> = BTreeMap::new();
            for (a, w) in posterior {
                let cmd = Command::new(a.clone(), bob, eve);
                let lik = self.model.born_probability(&cmd, o).unwrap_or(0.0);
                let p = w * lik;
                marginal += p;
                cond.insert(a.clone(), p);
            }
            if marginal > 0.0 {
                let cond = cond.into_iter().map(|(a, p)| (a, p / marginal)).collect();
                expected += marginal * entropy(&cond);
            }
        }
        expected
    }
}

impl FeedbackPolicy for GreedyDiscriminationPolicy {
    fn name(&self) -> &str {
        "greedy-discrimination"
    }

    fn next_command(
        &mut self,
        history: &[TrialRecord],
        commands: &CommandSet,
        _rng: &mut ChaCha8Rng,
    ) -> Command {
        let posterior = self.posterior(history);
        let mut best: Option<(f64, String, String)> = None;
        for b in commands.bob() {
            for e in commands.eve() {
                let h = self.expected_entropy(&posterior, b, e);
                let better = match &best {
                    None => true,
                    Some((bh, _, _)) => h < *bh - 1e-15,
                };
                if better {
                    best = Some((h, b.clone(), e.clone()));
                }
            }
        }
        let (_, b, e) = best.expect("non-empty command set");
        Command::new(self.alice_command.clone(), b, e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CMatrix, CVector, C64};
    use crate::model::Povm;
    use std::collections::BTreeMap as Map;

    fn two_outcome_model() -> QmModel {
        let ket = |x: &[f64]| {
            CVector::from_iterator(x.len(), x.iter().map(|&v| C64::new(v, 0.0)))
        };
        let diag = |x: &[f64]| {
            CMatrix::from_fn(x.len(), x.len(), |i, j| {
                if i == j {
                    C64::new(x[i], 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
        };
        let commands = CommandSet::new(
            vec!["a0", "a1"],
            vec!["b"],
            vec!["e"],
        )
        .unwrap();
        let mut states = Map::new();
        states.insert("a0".to_string(), ket(&[1.0, 0.0]));
        states.insert("a1".to_string(), ket(&[0.0, 1.0]));
        let povm = Povm::new(vec![("o0", diag(&[1.0, 0.0])), ("o1", diag(&[0.0, 1.0]))]).unwrap();
        let mut povms = Map::new();
        povms.insert(("b".to_string(), "e".to_string()), povm);
        QmModel::new(2, commands, states, Map::new(), povms).unwrap()
    }

    #[test]
    fn fixed_schedule_runs_in_order() {
        let model = two_outcome_model();
        let sched = vec![
            Command::new("a0", "b", "e"),
            Command::new("a1", "b", "e"),
        ];
        let log = run_trials(&model, Schedule::Fixed(sched.clone()), 10, 1).unwrap();
        assert_eq!(log.records.len(), 10);
        for (i, rec) in log.records.iter().enumerate() {
            assert_eq!(rec.index, i as u64);
            assert_eq!(rec.command, sched[i % 2]);
        }
    }

    #[test]
    fn same_seed_gives_identical_logs() {
        let model = two_outcome_model();
        let sched = || Schedule::Fixed(vec![Command::new("a0", "b", "e")]);
        let a = run_trials(&model, sched(), 100, 42).unwrap();
        let b = run_trials(&model, sched(), 100, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn deterministic_command_gives_deterministic_outcome() {
        let model = two_outcome_model();
        let log = run_trials(
            &model,
            Schedule::Fixed(vec![Command::new("a0", "b", "e")]),
            50,
            7,
        )
        .unwrap();
        assert!(log.records.iter().all(|r| r.outcome == "o0"));
    }

    #[test]
    fn invalid_policy_command_names_the_trial() {
        struct Bad;
        impl FeedbackPolicy for Bad {
            fn name(&self) -> &str {
                "bad"
            }
            fn next_command(
                &mut self,
                history: &[TrialRecord],
                _commands: &CommandSet,
                _rng: &mut ChaCha8Rng,
            ) -> Command {
                if history.len() < 3 {
                    Command::new("a0", "b", "e")
                } else {
                    Command::new("nope", "b", "e")
                }
            }
        }
        match run_trials(&two_outcome_model(), Schedule::Policy(Box::new(Bad)), 10, 0) {
            Err(QmwbError::Policy { trial, .. }) => assert_eq!(trial, 3),
            other => panic!("expected policy error, got {other:?}"),
        }
    }

    #[test]
    fn frequencies_sum_to_one_per_command() {
        let model = two_outcome_model();
        let sched = Schedule::Fixed(vec![
            Command::new("a0", "b", "e"),
            Command::new("a1", "b", "e"),
        ]);
        let log = run_trials(&model, sched, 200, 3).unwrap();
        let freqs = empirical_frequencies(&log).unwrap();
        for (_, counts) in freqs {
            let total: f64 = counts
                .counts
                .keys()
                .map(|o| counts.frequency(o))
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn log_round_trip_is_bit_exact() {
        let model = two_outcome_model();
        let log = run_trials(
            &model,
            Schedule::Fixed(vec![Command::new("a0", "b", "e")]),
            25,
            9,
        )
        .unwrap();
        let text = log.to_text();
        let loaded = RunLog::from_text(&text).unwrap();
        assert_eq!(loaded, log);
        assert_eq!(loaded.to_text(), text);
    }

    #[test]
    fn truncated_record_is_a_parse_error_with_line() {
        let model = two_outcome_model();
        let log = run_trials(
            &model,
            Schedule::Fixed(vec![Command::new("a0", "b", "e")]),
            3,
            9,
        )
        .unwrap();
        let mut text = log.to_text();
        text.truncate(text.len() - 4); // damage the last record line
        match RunLog::from_text(&text) {
            Err(QmwbError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn log_prefix_is_bytewise_prefix() {
        let model = two_outcome_model();
        let sched = || Schedule::Fixed(vec![Command::new("a0", "b", "e")]);
        let short = run_trials(&model, sched(), 20, 5).unwrap();
        let long = run_trials(&model, sched(), 21, 5).unwrap();
        assert!(long.to_text().starts_with(&short.to_text()));
    }

    #[test]
    fn mismatched_model_id_is_flagged() {
        let model = two_outcome_model();
        let mut log = run_trials(
            &model,
            Schedule::Fixed(vec![Command::new("a0", "b", "e")]),
            10,
            1,
        )
        .unwrap();
        log.model_id = "deadbeef".into();
        let report = fit_model(&model, &log).unwrap();
        assert!(report.model_id_mismatch);
    }

    #[test]
    fn greedy_policy_repeats_resolving_command() {
        let model = two_outcome_model();
        let prior = Prior::uniform(model.commands().alice().iter().cloned()).unwrap();
        let policy = GreedyDiscriminationPolicy::new(model.clone(), prior, "a1").unwrap();
        let log = run_trials(&model, Schedule::Policy(Box::new(policy)), 5, 0).unwrap();
        // Orthogonal states with a projective measurement: outcome o1 pins
        // Alice's command after the first trial; the policy keeps measuring.
        for rec in &log.records {
            assert_eq!(rec.command, Command::new("a1", "b", "e"));
            assert_eq!(rec.outcome, "o1");
        }
        let policy = GreedyDiscriminationPolicy::new(
            model.clone(),
            Prior::uniform(model.commands().alice().iter().cloned()).unwrap(),
            "a1",
        )
        .unwrap();
        let posterior = policy.posterior(&log.records);
        assert!((posterior["a1"] - 1.0).abs() < 1e-12);
    }
}
