//! Command-line surface for batch experiments.
//!
//! All outputs are plain structured text (CSV or line-oriented), with the
//! invoking configuration and input hashes embedded as `#` comment lines so
//! every artifact carries its provenance. Exit codes: 0 success, 1 domain or
//! validation failure, 2 I/O or parse failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::discrimination::helstrom_binary;
use crate::engine::{fit_model, run_trials, RandomCommandPolicy, RunLog, Schedule};
use crate::envelopment::{
    check_envelopment, envelop_with_leakage, EnvelopmentMap, ExtraPovmPolicy,
};
use crate::error::{QmwbError, Result};
use crate::model::{Command, QmModel};
use crate::protocols::{
    b92_model, bb84_model, eve_weights, exact_qber, sift_and_estimate_qber, AttackSpec,
    BasisPolicy, ProtocolSpec,
};

#[derive(Parser, Debug)]
#[command(name = "qmwb", version, about = "Quantum-model workbench and QKD attack simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Check every model invariant and report violations.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Emit the full probability table as CSV.
    Table {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the leakage envelopment of a model and write the enveloping
    /// model and the map.
    Envelop {
        #[arg(long)]
        model: PathBuf,
        /// Pairwise leakage overlap bound, 0 <= r < 1.
        #[arg(long)]
        r: f64,
        /// Output path for the enveloping model.
        #[arg(long)]
        beta: PathBuf,
        /// Output path for the envelopment map.
        #[arg(long)]
        map: PathBuf,
    },
    /// Verify that a map preserves probabilities between two models.
    Check {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        beta: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Sample trials from a model and write a run log.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Fixed schedule file (one `alice bob eve` triple per line);
        /// uniform random scheduling when absent.
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Build a protocol model, compute the exact sifted error rate, and
    /// estimate it by Monte-Carlo.
    Qber(QberArgs),
    /// Optimal binary discrimination between two of a model's states.
    Discriminate {
        #[arg(long)]
        model: PathBuf,
        /// Two Alice command labels, comma-separated.
        #[arg(long)]
        pair: String,
        /// Two prior weights, comma-separated.
        #[arg(long, default_value = "0.5,0.5")]
        priors: String,
    },
    /// Compare a model's predictions with a run log.
    Fit {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        log: PathBuf,
    },
}

#[derive(Args, Debug)]
struct QberArgs {
    #[arg(long, value_parser = ["bb84", "b92"])]
    protocol: String,
    /// B92 state angle.
    #[arg(long, default_value_t = std::f64::consts::PI / 8.0)]
    theta: f64,
    #[arg(long, value_parser = ["none", "intercept", "leakage"], default_value = "none")]
    attack: String,
    /// Fraction of trials attacked (intercept).
    #[arg(long, default_value_t = 1.0)]
    fraction: f64,
    /// Leakage overlap bound (leakage).
    #[arg(long, default_value_t = 0.0)]
    r: f64,
    #[arg(long)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of sifted trials revealed for comparison.
    #[arg(long, default_value_t = 1.0)]
    sample_fraction: f64,
    /// Optional CSV of per-command outcome counts.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// `#`-prefixed provenance block: the invoking command line plus a hash per
/// input file.
fn provenance(argv: &[String], inputs: &[&Path]) -> Result<String> {
    let mut out = format!("# qmwb {}\n", argv.join(" "));
    for path in inputs {
        out.push_str(&format!(
            "# input {} sha256 {}\n",
            path.display(),
            file_sha256(path)?
        ));
    }
    Ok(out)
}

fn write_with_provenance(path: &Path, header: &str, body: &str) -> Result<()> {
    std::fs::write(path, format!("{header}{body}"))?;
    Ok(())
}

fn parse_pair(s: &str) -> Result<(String, String)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(QmwbError::Parameter(format!(
            "expected two comma-separated values, got `{s}`"
        )));
    }
    Ok((parts[0].trim().to_string(), parts[1].trim().to_string()))
}

fn qber_command(args: &QberArgs, argv: &[String]) -> Result<bool> {
    let protocol = match args.protocol.as_str() {
        "bb84" => ProtocolSpec::Bb84,
        _ => ProtocolSpec::B92 { theta: args.theta },
    };
    let attack = match args.attack.as_str() {
        "none" => AttackSpec::None,
        "intercept" => AttackSpec::InterceptResend {
            fraction: args.fraction,
            basis_policy: BasisPolicy::UniformRandom,
        },
        _ => AttackSpec::LeakageReadout { r: args.r },
    };
    let model = match protocol {
        ProtocolSpec::Bb84 => bb84_model(&attack)?,
        ProtocolSpec::B92 { theta } => b92_model(theta, &attack)?,
    };
    let exact = exact_qber(&model, &protocol, &attack)?;
    let policy = RandomCommandPolicy::new(&model, eve_weights(&model, &attack)?)?;
    let log = run_trials(&model, Schedule::Policy(Box::new(policy)), args.trials, args.seed)?;
    let est = sift_and_estimate_qber(&log, &protocol, args.sample_fraction)?;
    let within = (est.qber - exact).abs() <= est.confidence_halfwidth;
    println!("# qmwb {}", argv.join(" "));
    println!("# model sha256 {}", model.content_hash());
    println!("exact_qber\t{exact:?}");
    println!("estimated_qber\t{:?}", est.qber);
    println!("halfwidth_3sigma\t{:?}", est.confidence_halfwidth);
    println!("n_compared\t{}", est.n_compared);
    println!("within_3sigma\t{within}");
    if let Some(out) = &args.out {
        let freqs = crate::engine::empirical_frequencies(&log)?;
        let mut body = String::from("alice,bob,eve,outcome,count\n");
        for (cmd, counts) in freqs {
            for (o, c) in &counts.counts {
                body.push_str(&format!("{},{},{},{},{}\n", cmd.alice, cmd.bob, cmd.eve, o, c));
            }
        }
        let header = format!(
            "# qmwb {}\n# model sha256 {}\n",
            argv.join(" "),
            model.content_hash()
        );
        write_with_provenance(out, &header, &body)?;
    }
    Ok(true)
}

fn dispatch(cli: Cli, argv: &[String]) -> Result<bool> {
    match &cli.cmd {
        Cmd::Validate { model } => {
            let m = QmModel::load(model)?;
            let report = m.validate();
            println!("# qmwb {}", argv.join(" "));
            println!("# input {} sha256 {}", model.display(), file_sha256(model)?);
            print!("{report}");
            Ok(report.is_valid())
        }
        Cmd::Table { model, out } => {
            let m = QmModel::load(model)?;
            let table = m.probability_table()?;
            let mut body = String::from("alice,bob,eve,outcome,probability\n");
            for (cmd, row) in &table {
                for (o, p) in row {
                    body.push_str(&format!(
                        "{},{},{},{},{:?}\n",
                        cmd.alice, cmd.bob, cmd.eve, o, p
                    ));
                }
            }
            let header = provenance(argv, &[model])?;
            match out {
                Some(path) => write_with_provenance(path, &header, &body)?,
                None => print!("{header}{body}"),
            }
            Ok(true)
        }
        Cmd::Envelop {
            model,
            r,
            beta,
            map,
        } => {
            let alpha = QmModel::load(model)?;
            let (beta_model, f) = envelop_with_leakage(&alpha, *r, ExtraPovmPolicy::Helstrom)?;
            let header = provenance(argv, &[model])?;
            write_with_provenance(beta, &header, &beta_model.to_text())?;
            write_with_provenance(map, &header, &f.to_text())?;
            println!("beta_dim\t{}", beta_model.dim());
            println!("beta_model_id\t{}", beta_model.content_hash());
            Ok(true)
        }
        Cmd::Check {
            model,
            beta,
            map,
            tol,
        } => {
            let alpha = QmModel::load(model)?;
            let beta_model = QmModel::load(beta)?;
            let f = EnvelopmentMap::load(map)?;
            let check = check_envelopment(&alpha, &beta_model, &f, *tol)?;
            println!("# qmwb {}", argv.join(" "));
            println!("holds\t{}", check.holds);
            println!("max_deviation\t{:?}", check.max_deviation);
            if let Some((cmd, o)) = &check.witness {
                println!("witness\t{cmd}\t{o}");
            }
            Ok(check.holds)
        }
        Cmd::Simulate {
            model,
            trials,
            seed,
            out,
            schedule,
        } => {
            let m = QmModel::load(model)?;
            let sched = match schedule {
                Some(path) => {
                    let text = std::fs::read_to_string(path)?;
                    let mut cmds = Vec::new();
                    for (idx, line) in text.lines().enumerate() {
                        let line = line.trim();
                        if line.is_empty() || line.starts_with('#') {
                            continue;
                        }
                        let fields: Vec<&str> = line.split_whitespace().collect();
                        if fields.len() != 3 {
                            return Err(QmwbError::Parse {
                                line: idx + 1,
                                message: "schedule line needs `alice bob eve`".into(),
                            });
                        }
                        cmds.push(Command::new(fields[0], fields[1], fields[2]));
                    }
                    Schedule::Fixed(cmds)
                }
                None => Schedule::Policy(Box::new(RandomCommandPolicy::protocol_uniform(&m)?)),
            };
            let log = run_trials(&m, sched, *trials, *seed)?;
            let header = provenance(argv, &[model])?;
            write_with_provenance(out, &header, &log.to_text())?;
            println!("trials\t{}", log.records.len());
            println!("log\t{}", out.display());
            Ok(true)
        }
        Cmd::Qber(args) => qber_command(args, argv),
        Cmd::Discriminate {
            model,
            pair,
            priors,
        } => {
            let m = QmModel::load(model)?;
            let (a0, a1) = parse_pair(pair)?;
            let (p0s, p1s) = parse_pair(priors)?;
            let p0: f64 = p0s.parse().map_err(|_| {
                QmwbError::Parameter(format!("bad prior `{p0s}`"))
            })?;
            let p1: f64 = p1s.parse().map_err(|_| {
                QmwbError::Parameter(format!("bad prior `{p1s}`"))
            })?;
            let res = helstrom_binary(m.state(&a0)?, m.state(&a1)?, p0, p1)?;
            println!("# qmwb {}", argv.join(" "));
            println!("# input {} sha256 {}", model.display(), file_sha256(model)?);
            println!("overlap\t{:?}", m.overlap(&a0, &a1)?);
            println!("error_probability\t{:?}", res.error_probability);
            for (o, mat) in res.povm.iter() {
                let mut line = format!("povm_element\t{o}");
                for i in 0..mat.nrows() {
                    for j in 0..mat.ncols() {
                        line.push_str(&format!(
                            "\t{:?}\t{:?}",
                            mat[(i, j)].re,
                            mat[(i, j)].im
                        ));
                    }
                }
                println!("{line}");
            }
            for (o, d) in &res.decision_rule {
                let label = if d == "0" { &a0 } else { &a1 };
                println!("decide\t{o}\t{label}");
            }
            Ok(true)
        }
        Cmd::Fit { model, log } => {
            let m = QmModel::load(model)?;
            let run = RunLog::load(log)?;
            let report = fit_model(&m, &run)?;
            println!("# qmwb {}", argv.join(" "));
            println!("# input {} sha256 {}", model.display(), file_sha256(model)?);
            println!("# input {} sha256 {}", log.display(), file_sha256(log)?);
            if report.model_id_mismatch {
                println!("warning\tmodel_id_mismatch");
            }
            println!("alice\tbob\teve\ttv\tn");
            for (cmd, fit) in &report.per_command {
                println!(
                    "{}\t{}\t{}\t{:?}\t{}",
                    cmd.alice, cmd.bob, cmd.eve, fit.tv, fit.total
                );
            }
            println!("max_tv\t{:?}", report.max_tv);
            println!("n_min\t{}", report.n_min);
            Ok(true)
        }
    }
}

fn exit_code_for(err: &QmwbError) -> i32 {
    match err {
        QmwbError::Io(_) | QmwbError::Parse { .. } => 2,
        _ => 1,
    }
}

/// Run the CLI on an argument vector (excluding the program name handled by
/// clap). Returns the process exit code.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(err) => {
            eprint!("{err}");
            return 2;
        }
    };
    match dispatch(cli, &args[1..]) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}
