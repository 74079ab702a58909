use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{replay_deltas, AccountId, EventRecord};
use crate::participant::{BlameReason, Phase};

use super::anonymity::{analyze_anonymity, AnonymityError};
use super::sim::Simulation;

pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const CHANNEL_FILE: &str = "channel.jsonl";
pub const REPORT_FILE: &str = "report.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    /// Paid out on the first attempt.
    Completed,
    /// Paid out after at least one failed round.
    CompletedAfterBlame,
    /// Every honest participant took its deposit back.
    AllWithdrawn,
    /// Tick budget exhausted.
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ejections {
    pub positions: Vec<u16>,
    pub reasons: BTreeMap<u16, BlameReason>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnonymityReport {
    pub set_size: usize,
    /// `None` when the group is too large to enumerate.
    pub consistent_assignments: Option<u64>,
    pub reduced: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantSummary {
    pub account: String,
    pub destination: String,
    pub first_position: Option<u16>,
    pub honest: bool,
    pub phase: Phase,
    pub deposits: usize,
    /// Change of account plus destination balance.
    pub holdings_delta: i64,
}

impl ParticipantSummary {
    /// Lost more than the gas of its own deposits.
    pub fn lost_principal(&self, gas_fee: u64) -> bool {
        self.holdings_delta < -((gas_fee * self.deposits as u64) as i64)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub outcome: Outcome,
    pub seed: u64,
    pub k: usize,
    pub ticks: u64,
    pub rounds_used: usize,
    pub ejections: Ejections,
    /// Nonzero balance changes by hex id, accounts and escrows alike.
    pub balance_deltas: BTreeMap<String, i64>,
    pub gas_collected: u64,
    pub anonymity: Option<AnonymityReport>,
    pub participants: Vec<ParticipantSummary>,
    /// Log files, relative to the report.
    pub transcript_paths: Vec<String>,
}

impl Report {
    pub fn from_simulation(
        sim: &Simulation,
        settled: bool,
        ledger_log: &str,
        transcript: &str,
    ) -> Report {
        let cfg = sim.config();
        let ledger = sim.ledger();
        let mut deltas: BTreeMap<String, i64> = BTreeMap::new();
        for (account, bal) in ledger.accounts() {
            let start = sim.funded().get(account).copied().unwrap_or(0);
            deltas.insert(account.to_string(), *bal as i64 - start as i64);
        }
        for st in ledger.escrows() {
            deltas.insert(st.id.to_string(), st.escrow_balance as i64);
        }
        deltas.retain(|_, v| *v != 0);

        let participants: Vec<ParticipantSummary> = sim
            .participants()
            .iter()
            .zip(sim.first_positions())
            .map(|(p, pos)| {
                let account = p.account().to_string();
                let destination = AccountId::from(p.destination()).to_string();
                ParticipantSummary {
                    holdings_delta: deltas.get(&account).copied().unwrap_or(0)
                        + deltas.get(&destination).copied().unwrap_or(0),
                    account,
                    destination,
                    first_position: *pos,
                    honest: p.role().is_honest(),
                    phase: p.phase(),
                    deposits: p.deposits(),
                }
            })
            .collect();

        let failed = sim.failed_rounds().next().is_some();
        let any_done = participants
            .iter()
            .any(|p| p.honest && p.phase == Phase::Done);
        let outcome = match (settled, any_done, failed) {
            (false, _, _) => Outcome::Stalled,
            (true, true, false) => Outcome::Completed,
            (true, true, true) => Outcome::CompletedAfterBlame,
            (true, false, _) => Outcome::AllWithdrawn,
        };
        let ejections = match sim.first_failure() {
            Some((_, v)) => Ejections {
                positions: v.ejected().into_iter().collect(),
                reasons: v.reasons,
            },
            None => Ejections {
                positions: Vec::new(),
                reasons: BTreeMap::new(),
            },
        };
        let anonymity = match analyze_anonymity(ledger_log, transcript) {
            Ok(a) => Some(AnonymityReport {
                set_size: a.set_size,
                consistent_assignments: Some(a.consistent),
                reduced: a.reduced(),
                note: None,
            }),
            Err(AnonymityError::TooLarge(m)) => Some(AnonymityReport {
                set_size: m,
                consistent_assignments: None,
                reduced: false,
                note: Some(format!("exhaustive count skipped for a group of {m}")),
            }),
            Err(AnonymityError::NoPayout) => None,
            Err(e) => Some(AnonymityReport {
                set_size: 0,
                consistent_assignments: None,
                reduced: false,
                note: Some(e.to_string()),
            }),
        };
        Report {
            outcome,
            seed: cfg.seed,
            k: cfg.k,
            ticks: sim.now(),
            rounds_used: sim.rounds().len(),
            ejections,
            balance_deltas: deltas,
            gas_collected: ledger.gas_collected(),
            anonymity,
            participants,
            transcript_paths: vec![LEDGER_FILE.to_string(), CHANNEL_FILE.to_string()],
        }
    }

    /// Balance changes sum to minus the gas collected.
    pub fn is_conserved(&self) -> bool {
        self.balance_deltas
            .values()
            .map(|v| *v as i128)
            .sum::<i128>()
            + self.gas_collected as i128
            == 0
    }

    pub fn honest_lost_principal(&self, gas_fee: u64) -> bool {
        self.participants
            .iter()
            .any(|p| p.honest && p.lost_principal(gas_fee))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("cannot read {0}: {1}")]
    Io(String, std::io::Error),
    #[error("malformed {0}: {1}")]
    Malformed(&'static str, String),
    #[error("conservation violation: {0}")]
    Conservation(String),
}

/// Re-reads an output directory and checks the report against a replay of
/// the ledger log.
pub fn verify_dir(dir: &Path) -> Result<Report, VerifyError> {
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read_to_string(&p).map_err(|e| VerifyError::Io(p.display().to_string(), e))
    };
    let report: Report = serde_json::from_str(&read(REPORT_FILE)?)
        .map_err(|e| VerifyError::Malformed(REPORT_FILE, e.to_string()))?;
    let records: Vec<EventRecord> = read(LEDGER_FILE)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()
        .map_err(|e| VerifyError::Malformed(LEDGER_FILE, e.to_string()))?;
    let (replayed, gas) = replay_deltas(&records).map_err(VerifyError::Conservation)?;
    let claimed = &report.balance_deltas;
    let replayed: BTreeMap<String, i64> =
        replayed.into_iter().map(|(k, v)| (k, v as i64)).collect();
    if &replayed != claimed {
        let diff: Vec<String> = replayed
            .keys()
            .chain(claimed.keys())
            .filter(|k| replayed.get(*k) != claimed.get(*k))
            .map(|k| {
                format!(
                    "{k}: log {:?} vs report {:?}",
                    replayed.get(k),
                    claimed.get(k)
                )
            })
            .collect();
        return Err(VerifyError::Conservation(diff.join("; ")));
    }
    if gas != report.gas_collected as u128 {
        return Err(VerifyError::Conservation(format!(
            "log gas {gas} vs report {}",
            report.gas_collected
        )));
    }
    if !report.is_conserved() {
        return Err(VerifyError::Conservation(
            "deltas do not sum to minus gas".into(),
        ));
    }
    Ok(report)
}
