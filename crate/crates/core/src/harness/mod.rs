//! Scenario runner: builds a population from a config, drives it to the
//! end, and reports outcome, ejections, balances and linkability.

mod anonymity;
pub mod cli;
mod config;
mod report;
mod sim;

use std::collections::BTreeSet;
use std::path::Path;

pub use anonymity::{analyze_anonymity, AnonymityError, AnonymityResult, MAX_EXHAUSTIVE};
pub use config::{parse_adversary, parse_withdrawal, AdversarySpec, ConfigError, ScenarioConfig};
pub use report::{
    verify_dir, AnonymityReport, Ejections, Outcome, ParticipantSummary, Report, VerifyError,
    CHANNEL_FILE, LEDGER_FILE, REPORT_FILE,
};
pub use sim::{RoundRecord, Simulation};

use crate::participant::{AdversaryKind, BlameReason};

/// A finished run and its public logs.
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub report: Report,
    pub ledger_log: String,
    pub transcript: String,
}

impl ScenarioRun {
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(LEDGER_FILE), &self.ledger_log)?;
        std::fs::write(dir.join(CHANNEL_FILE), &self.transcript)?;
        std::fs::write(dir.join(REPORT_FILE), self.report.to_json())
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun, ConfigError> {
    let mut sim = Simulation::new(cfg)?;
    let settled = sim.run();
    let ledger_log = sim.ledger().export_jsonl();
    let transcript = sim.channel().export_jsonl();
    let report = Report::from_simulation(&sim, settled, &ledger_log, &transcript);
    Ok(ScenarioRun {
        report,
        ledger_log,
        transcript,
    })
}

/// One adversary placement with the positions it must cost.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatrixCase {
    pub k: usize,
    pub adversary: String,
    pub expected: BTreeSet<u16>,
    /// Reason every ejection must carry, where one is fixed.
    pub reason: Option<BlameReason>,
}

/// Positions a deviation should get ejected from the first round.
pub fn expected_ejections(kind: &AdversaryKind, position: u16) -> BTreeSet<u16> {
    match kind {
        AdversaryKind::FalseAccuserPair {
            a,
            c,
            target,
            deliver_proof,
        } => {
            if *deliver_proof {
                [*a, *c].into()
            } else {
                [*a, *target, *c].into()
            }
        }
        other => other.positions(position).into_iter().collect(),
    }
}

pub fn expected_reason(kind: &AdversaryKind) -> Option<BlameReason> {
    match kind {
        AdversaryKind::Silent => Some(BlameReason::Silent),
        AdversaryKind::Dropper { .. } | AdversaryKind::Modifier { .. } => {
            Some(BlameReason::BadPeel)
        }
        AdversaryKind::NonSigner => Some(BlameReason::Timeout),
        AdversaryKind::FalseAccuserPair {
            deliver_proof: true,
            ..
        } => Some(BlameReason::FalseAccusation),
        AdversaryKind::FalseAccuserPair {
            deliver_proof: false,
            ..
        } => None,
    }
}

/// Every adversary kind at every position it can take, for each `k`.
pub fn matrix_cases(ks: &[usize]) -> Vec<MatrixCase> {
    let mut out = Vec::new();
    for &k in ks {
        let mut specs = Vec::new();
        for p in 1..=k {
            for kind in ["silent", "dropper", "modifier", "nonsigner"] {
                specs.push(format!("{kind}@{p}"));
            }
        }
        for t in 2..k {
            specs.push(format!("false-accuser@{t}"));
            specs.push(format!("false-accuser@{t}:noproof"));
        }
        for adversary in specs {
            let spec = parse_adversary(&adversary, k).expect("matrix specs parse");
            let at = spec.positions[0];
            out.push(MatrixCase {
                k,
                expected: expected_ejections(&spec.kind, at),
                reason: expected_reason(&spec.kind),
                adversary,
            });
        }
    }
    out
}

/// Failures of one matrix case, empty when it behaved.
pub fn check_case(case: &MatrixCase, seed: u64) -> Vec<String> {
    let cfg = ScenarioConfig::honest(case.k, seed).with_adversary(&case.adversary);
    let run = match run_scenario(&cfg) {
        Ok(r) => r,
        Err(e) => return vec![e.to_string()],
    };
    let r = &run.report;
    let mut problems = Vec::new();
    let got: BTreeSet<u16> = r.ejections.positions.iter().copied().collect();
    if got != case.expected {
        problems.push(format!("ejected {got:?}, expected {:?}", case.expected));
    }
    if let Some(want) = case.reason {
        for (p, reason) in &r.ejections.reasons {
            if *reason != want {
                problems.push(format!(
                    "position {p} ejected for {reason:?}, expected {want:?}"
                ));
            }
        }
    }
    if !matches!(
        r.outcome,
        Outcome::CompletedAfterBlame | Outcome::AllWithdrawn
    ) {
        problems.push(format!("outcome {:?}", r.outcome));
    }
    if !r.is_conserved() {
        problems.push("balances not conserved".into());
    }
    if r.honest_lost_principal(cfg.gas_fee) {
        problems.push("an honest participant lost principal".into());
    }
    problems
}
