//! `tumblesim` command line. Exit status 0 on success, 1 when a scenario
//! misbehaves or a report fails verification, 2 on usage errors.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::{
    check_case, expected_ejections, matrix_cases, parse_adversary, run_scenario, verify_dir,
    Outcome, ScenarioConfig, ScenarioRun,
};

pub const SEED_ENV: &str = "TUMBLESIM_SEED";

#[derive(Parser, Debug)]
#[command(
    name = "tumblesim",
    about = "Simulate mixing rounds against a toy ledger"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the file and the environment.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "tumblesim-out")]
        out: PathBuf,
    },
    /// Run one adversary against an otherwise honest group. Extra
    /// parameters follow the kind, as in `modifier:1` or `false-accuser:noproof`.
    BlameDemo {
        #[arg(long)]
        adversary: String,
        #[arg(long)]
        position: u16,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "tumblesim-out")]
        out: PathBuf,
    },
    /// Check a previous run's report against its ledger log.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Every adversary at every position.
    Matrix {
        #[arg(long, value_delimiter = ',', default_value = "3,4,5")]
        k: Vec<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn env_seed() -> Option<u64> {
    std::env::var(SEED_ENV).ok().and_then(|s| s.parse().ok())
}

/// Runs the command line and returns the exit status.
pub fn run_cli<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 {
                write!(out, "{}", e.render())
            } else {
                write!(err, "{}", e.render())
            };
            return code;
        }
    };
    match cli.command {
        Command::Run {
            config,
            seed,
            out: dir,
        } => {
            let mut cfg = match ScenarioConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    let _ = writeln!(err, "{e}");
                    return 2;
                }
            };
            if let Some(s) = seed.or_else(env_seed) {
                cfg.seed = s;
            }
            execute(&cfg, &dir, out, err, |run| run_ok(run, &cfg))
        }
        Command::BlameDemo {
            adversary,
            position,
            k,
            seed,
            out: dir,
        } => {
            let spec = match adversary.split_once(':') {
                Some((kind, params)) => format!("{kind}@{position}:{params}"),
                None => format!("{adversary}@{position}"),
            };
            let cfg = ScenarioConfig::honest(k, seed.or_else(env_seed).unwrap_or(0))
                .with_adversary(&spec);
            if let Err(e) = cfg.validate() {
                let _ = writeln!(err, "{e}");
                return 2;
            }
            let parsed = parse_adversary(&spec, k).expect("validated above");
            let expected = expected_ejections(&parsed.kind, parsed.positions[0]);
            execute(&cfg, &dir, out, err, |run| {
                let got: std::collections::BTreeSet<u16> =
                    run.report.ejections.positions.iter().copied().collect();
                if got == expected {
                    Ok(())
                } else {
                    Err(format!("ejected {got:?}, expected {expected:?}"))
                }
            })
        }
        Command::Report { input } => match verify_dir(&input) {
            Ok(r) => {
                let _ = writeln!(out, "{}", r.to_json());
                0
            }
            Err(e) => {
                let _ = writeln!(err, "{e}");
                1
            }
        },
        Command::Matrix { k, seed } => {
            if k.iter().any(|k| *k < 3) {
                let _ = writeln!(err, "matrix sizes must be at least 3");
                return 2;
            }
            let seed = seed.or_else(env_seed).unwrap_or(0);
            let mut failed = 0;
            for case in matrix_cases(&k) {
                let problems = check_case(&case, seed);
                let status = if problems.is_empty() { "ok" } else { "FAIL" };
                let _ = writeln!(
                    out,
                    "{status} k={} {} {}",
                    case.k,
                    case.adversary,
                    problems.join("; ")
                );
                failed += usize::from(!problems.is_empty());
            }
            let _ = writeln!(out, "{failed} failing case(s)");
            i32::from(failed > 0)
        }
    }
}

fn run_ok(run: &ScenarioRun, cfg: &ScenarioConfig) -> Result<(), String> {
    let r = &run.report;
    if r.outcome == Outcome::Stalled {
        return Err("tick budget exhausted".into());
    }
    if !r.is_conserved() {
        return Err("conservation violation".into());
    }
    if r.honest_lost_principal(cfg.gas_fee) {
        return Err("an honest participant lost principal".into());
    }
    Ok(())
}

fn execute(
    cfg: &ScenarioConfig,
    dir: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
    judge: impl FnOnce(&ScenarioRun) -> Result<(), String>,
) -> i32 {
    let run = match run_scenario(cfg) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return 2;
        }
    };
    if let Err(e) = run.write_to(dir) {
        let _ = writeln!(err, "cannot write {}: {e}", dir.display());
        return 1;
    }
    let r = &run.report;
    let _ = writeln!(
        out,
        "outcome={:?} rounds={} ticks={} ejections={:?} out={}",
        r.outcome,
        r.rounds_used,
        r.ticks,
        r.ejections.positions,
        dir.display()
    );
    match judge(&run) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            1
        }
    }
}
