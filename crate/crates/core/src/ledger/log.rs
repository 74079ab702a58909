//! Public event log and its line-delimited JSON form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::onion::Destination;

use super::{AccountId, EscrowId, Placement};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Create,
    Deposit,
    Withdraw,
    Payout,
    Flush,
    Reject,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum EventBody {
    Create {
        escrow: EscrowId,
        channel_id: [u8; 32],
        denomination: u64,
        k: usize,
        gas_fee: u64,
    },
    Deposit {
        escrow: EscrowId,
        from: AccountId,
        pk_enc: Vec<u8>,
        amount: u64,
        gas: u64,
        placement: Placement,
        mixing_round: Option<u64>,
    },
    Withdraw {
        escrow: EscrowId,
        from: AccountId,
        amount: u64,
    },
    Payout {
        escrow: EscrowId,
        submitter: AccountId,
        round: u64,
        payers: Vec<AccountId>,
        destinations: Vec<Destination>,
        amount_each: u64,
    },
    Flush {
        escrow: EscrowId,
        promoted: usize,
        mixing_round: Option<u64>,
    },
    Reject {
        escrow: EscrowId,
        from: Option<AccountId>,
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerEvent {
    pub seq: u64,
    pub(crate) body: EventBody,
}

/// One line of `ledger.jsonl`. Fields not relevant to a kind are omitted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub kind: Option<EventKind>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub from: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub amount: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
    pub escrow: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub channel_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub denomination: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gas: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pk: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub placement: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub round: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub payers: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub destinations: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub promoted: Option<usize>,
}

impl LedgerEvent {
    pub fn kind(&self) -> EventKind {
        match &self.body {
            EventBody::Create { .. } => EventKind::Create,
            EventBody::Deposit { .. } => EventKind::Deposit,
            EventBody::Withdraw { .. } => EventKind::Withdraw,
            EventBody::Payout { .. } => EventKind::Payout,
            EventBody::Flush { .. } => EventKind::Flush,
            EventBody::Reject { .. } => EventKind::Reject,
        }
    }

    pub fn escrow(&self) -> EscrowId {
        match &self.body {
            EventBody::Create { escrow, .. }
            | EventBody::Deposit { escrow, .. }
            | EventBody::Withdraw { escrow, .. }
            | EventBody::Payout { escrow, .. }
            | EventBody::Flush { escrow, .. }
            | EventBody::Reject { escrow, .. } => *escrow,
        }
    }

    /// Account that initiated the event, if any.
    pub fn from(&self) -> Option<AccountId> {
        match &self.body {
            EventBody::Deposit { from, .. } | EventBody::Withdraw { from, .. } => Some(*from),
            EventBody::Payout { submitter, .. } => Some(*submitter),
            EventBody::Reject { from, .. } => *from,
            EventBody::Create { .. } | EventBody::Flush { .. } => None,
        }
    }

    /// Payers of an accepted payout.
    pub fn payers(&self) -> Option<&[AccountId]> {
        match &self.body {
            EventBody::Payout { payers, .. } => Some(payers),
            _ => None,
        }
    }

    pub fn record(&self) -> EventRecord {
        let mut r = EventRecord {
            seq: self.seq,
            kind: Some(self.kind()),
            escrow: self.escrow().to_string(),
            ..Default::default()
        };
        r.from = self.from().map(|a| a.to_string());
        match &self.body {
            EventBody::Create {
                channel_id,
                denomination,
                k,
                gas_fee,
                ..
            } => {
                r.channel_id = Some(hex::encode(channel_id));
                r.denomination = Some(*denomination);
                r.k = Some(*k);
                r.gas = Some(*gas_fee);
            }
            EventBody::Deposit {
                pk_enc,
                amount,
                gas,
                placement,
                mixing_round,
                ..
            } => {
                r.amount = Some(*amount);
                r.gas = Some(*gas);
                r.pk = Some(hex::encode(pk_enc));
                r.placement = Some(match placement {
                    Placement::Buffer(i) => format!("buffer:{i}"),
                    Placement::Pool(i) => format!("pool:{i}"),
                });
                r.round = *mixing_round;
            }
            EventBody::Withdraw { amount, .. } => r.amount = Some(*amount),
            EventBody::Payout {
                round,
                payers,
                destinations,
                amount_each,
                ..
            } => {
                r.amount = Some(*amount_each);
                r.round = Some(*round);
                r.payers = Some(payers.iter().map(|p| p.to_string()).collect());
                r.destinations = Some(destinations.iter().map(|d| d.to_string()).collect());
            }
            EventBody::Flush {
                promoted,
                mixing_round,
                ..
            } => {
                r.promoted = Some(*promoted);
                r.round = *mixing_round;
            }
            EventBody::Reject { reason, .. } => r.reason = Some(reason.clone()),
        }
        r
    }
}

/// Recomputes per-account (and per-escrow) balance changes plus collected
/// gas from exported records alone. Errors name the first inconsistency.
pub fn replay_deltas(records: &[EventRecord]) -> Result<(BTreeMap<String, i128>, u128), String> {
    let mut deltas: BTreeMap<String, i128> = BTreeMap::new();
    let mut gas: u128 = 0;
    for (i, r) in records.iter().enumerate() {
        if r.seq != i as u64 {
            return Err(format!("record {i} has sequence number {}", r.seq));
        }
        let need = |v: Option<u64>, what: &str| v.ok_or_else(|| format!("record {i} lacks {what}"));
        match r.kind {
            Some(EventKind::Deposit) => {
                let from = r
                    .from
                    .clone()
                    .ok_or_else(|| format!("record {i} lacks from"))?;
                let amount = need(r.amount, "amount")? as i128;
                let g = need(r.gas, "gas")?;
                *deltas.entry(from).or_default() -= amount + g as i128;
                *deltas.entry(r.escrow.clone()).or_default() += amount;
                gas += g as u128;
            }
            Some(EventKind::Withdraw) => {
                let from = r
                    .from
                    .clone()
                    .ok_or_else(|| format!("record {i} lacks from"))?;
                let amount = need(r.amount, "amount")? as i128;
                *deltas.entry(from).or_default() += amount;
                *deltas.entry(r.escrow.clone()).or_default() -= amount;
            }
            Some(EventKind::Payout) => {
                let each = need(r.amount, "amount")? as i128;
                let dests = r
                    .destinations
                    .clone()
                    .ok_or_else(|| format!("record {i} lacks destinations"))?;
                for d in &dests {
                    *deltas.entry(d.clone()).or_default() += each;
                }
                *deltas.entry(r.escrow.clone()).or_default() -= each * dests.len() as i128;
            }
            Some(_) => {}
            None => return Err(format!("record {i} has no kind")),
        }
        if let Some(bal) = deltas.get(&r.escrow) {
            if *bal < 0 {
                return Err(format!("escrow {} goes negative at record {i}", r.escrow));
            }
        }
    }
    deltas.retain(|_, v| *v != 0);
    Ok((deltas, gas))
}
