//! Linkability analysis from public logs alone.
//!
//! An observer holding `ledger.jsonl` and `channel.jsonl` counts the
//! payer-to-destination assignments of a payout that agree with everything
//! public. Secret keys revealed during blame let the observer strip every
//! layer of that round's onions, which links each creator to its address;
//! those links constrain later payouts that reuse the address.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::channel::{MessageKind, TranscriptRecord};
use crate::groupcrypto::{pke_decrypt, Ciphertext, GroupElement, Scalar, SCALAR_LEN};
use crate::ledger::{EventKind, EventRecord};

/// Innermost plaintext width and per-layer growth of an onion.
const PADDED: usize = 32;
const LAYER: usize = 53;

/// Exhaustive enumeration is limited to groups of this size.
pub const MAX_EXHAUSTIVE: usize = 7;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnonymityError {
    #[error("group of {0} is too large for exhaustive enumeration")]
    TooLarge(usize),
    #[error("no payout in the ledger log")]
    NoPayout,
    #[error("malformed log: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AnonymityResult {
    pub set_size: usize,
    /// Assignments consistent with the public record.
    pub consistent: u64,
    /// `set_size!`
    pub total: u64,
    /// Payer-to-address links learned from blame reveals.
    pub links: usize,
}

impl AnonymityResult {
    pub fn reduced(&self) -> bool {
        self.consistent < self.total
    }
}

fn parse_lines<T: serde::de::DeserializeOwned>(
    text: &str,
    what: &str,
) -> Result<Vec<T>, AnonymityError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| AnonymityError::Malformed(format!("{what} line {}: {e}", i + 1)))
        })
        .collect()
}

/// Analyzes the last payout in the logs.
pub fn analyze_anonymity(
    ledger_log: &str,
    transcript: &str,
) -> Result<AnonymityResult, AnonymityError> {
    let records: Vec<EventRecord> = parse_lines(ledger_log, "ledger")?;
    let messages: Vec<TranscriptRecord> = parse_lines(transcript, "channel")?;
    let payout = records
        .iter()
        .rev()
        .find(|r| r.kind == Some(EventKind::Payout))
        .ok_or(AnonymityError::NoPayout)?;
    let payers = payout.payers.clone().unwrap_or_default();
    let dests = payout.destinations.clone().unwrap_or_default();
    let m = payers.len();
    if m != dests.len() || m == 0 {
        return Err(AnonymityError::Malformed(
            "payout lists differ in length".into(),
        ));
    }
    if m > MAX_EXHAUSTIVE {
        return Err(AnonymityError::TooLarge(m));
    }
    let channel_id = records
        .iter()
        .find(|r| r.kind == Some(EventKind::Create) && r.escrow == payout.escrow)
        .and_then(|r| r.channel_id.clone())
        .ok_or_else(|| AnonymityError::Malformed("payout escrow has no creation record".into()))?;
    let round = payout
        .round
        .ok_or_else(|| AnonymityError::Malformed("payout lacks round".into()))?;
    let structural = check_structure(&messages, &channel_id, round, &dests);

    let links = blame_links(&records, &messages);
    let allowed: Vec<Vec<bool>> = payers
        .iter()
        .map(|p| {
            dests
                .iter()
                .map(|d| match links.get(p) {
                    Some(linked) if dests.contains(linked) => linked == d,
                    _ => true,
                })
                .collect()
        })
        .collect();
    let used = payers
        .iter()
        .filter(|p| links.get(*p).is_some_and(|d| dests.contains(d)))
        .count();
    Ok(AnonymityResult {
        set_size: m,
        consistent: if structural {
            count_assignments(&allowed)
        } else {
            0
        },
        total: (1..=m as u64).product(),
        links: used,
    })
}

/// Whether the paid round's posts have the shape every shuffle of these
/// payers would produce: one key and one onion per member, onions and stage
/// posts of uniform width shrinking one layer per position, and a final
/// list equal to the paid destinations as a multiset.
fn check_structure(
    messages: &[TranscriptRecord],
    channel_id: &str,
    round: u64,
    dests: &[String],
) -> bool {
    let m = dests.len();
    let posts: Vec<(u16, MessageKind, Vec<u8>)> = messages
        .iter()
        .filter(|r| r.channel_id == channel_id && r.round == round)
        .filter_map(|r| Some((r.sender_position, r.kind, hex::decode(&r.payload).ok()?)))
        .collect();
    let of = |kind: MessageKind| -> BTreeMap<u16, &Vec<u8>> {
        let mut by_pos = BTreeMap::new();
        for (p, k, body) in &posts {
            if *k == kind {
                by_pos.entry(*p).or_insert(body);
            }
        }
        by_pos
    };
    let full = |map: &BTreeMap<u16, &Vec<u8>>| map.keys().copied().eq(1..=m as u16);
    let (keys, onions) = (of(MessageKind::AnnouncePk), of(MessageKind::OnionPost));
    if !full(&keys) || !full(&onions) {
        return false;
    }
    let width = |depth: usize| PADDED + depth * LAYER;
    if onions.values().any(|o| o.len() != width(m)) {
        return false;
    }
    let mut stages = of(MessageKind::StagePost);
    stages.extend(of(MessageKind::FinalList));
    if !full(&stages) {
        return false;
    }
    for (p, body) in &stages {
        let depth = m - *p as usize;
        let item = if depth == 0 { 20 } else { width(depth) };
        let header_ok = body.len() >= 4
            && u16::from_be_bytes([body[0], body[1]]) == *p
            && u16::from_be_bytes([body[2], body[3]]) as usize == m;
        if !header_ok || body.len() != 4 + m * item {
            return false;
        }
    }
    let mut posted: Vec<String> = stages[&(m as u16)][4..]
        .chunks(20)
        .map(hex::encode)
        .collect();
    let mut paid = dests.to_vec();
    posted.sort();
    paid.sort();
    posted == paid
}

/// Account -> destination links from rounds where every member's key was
/// revealed.
fn blame_links(records: &[EventRecord], messages: &[TranscriptRecord]) -> BTreeMap<String, String> {
    let mut account_of_pk: BTreeMap<String, String> = BTreeMap::new();
    for r in records
        .iter()
        .filter(|r| r.kind == Some(EventKind::Deposit))
    {
        if let (Some(pk), Some(from)) = (&r.pk, &r.from) {
            account_of_pk.insert(pk.clone(), from.clone());
        }
    }
    let mut rounds: BTreeMap<(&str, u64), Vec<&TranscriptRecord>> = BTreeMap::new();
    for m in messages {
        rounds
            .entry((m.channel_id.as_str(), m.round))
            .or_default()
            .push(m);
    }
    let mut links = BTreeMap::new();
    for msgs in rounds.values() {
        let first = |pos: u16, kind: MessageKind| {
            msgs.iter()
                .find(|m| m.sender_position == pos && m.kind == kind)
                .and_then(|m| hex::decode(&m.payload).ok())
        };
        let n = msgs
            .iter()
            .filter(|m| m.kind == MessageKind::AnnouncePk)
            .count() as u16;
        let mut keys = Vec::new();
        for p in 1..=n {
            let Some(ev) = first(p, MessageKind::BlameEvidence) else {
                break;
            };
            let (Some(sk), Some(pk)) = (
                ev.get(2..2 + SCALAR_LEN).and_then(Scalar::from_slice),
                first(p, MessageKind::AnnouncePk),
            ) else {
                break;
            };
            if GroupElement::from_bytes(&pk).is_none_or(|pk| GroupElement::base_pow(&sk) != pk) {
                break;
            }
            keys.push(sk);
        }
        if n == 0 || keys.len() != n as usize {
            continue;
        }
        for p in 1..=n {
            let (Some(pk), Some(onion)) = (
                first(p, MessageKind::AnnouncePk),
                first(p, MessageKind::OnionPost),
            ) else {
                continue;
            };
            let Some(account) = account_of_pk.get(&hex::encode(&pk)) else {
                continue;
            };
            if let Some(dest) = strip(&onion, &keys) {
                links.insert(account.clone(), hex::encode(&dest[..20]));
            }
        }
    }
    links
}

fn strip(blob: &[u8], keys: &[Scalar]) -> Option<Vec<u8>> {
    let mut cur = blob.to_vec();
    for sk in keys {
        cur = pke_decrypt(sk, &Ciphertext::from_bytes(&cur).ok()?).ok()?;
    }
    (cur.len() >= 20).then_some(cur)
}

/// Perfect matchings of a bipartite 0/1 matrix, by plain enumeration.
fn count_assignments(allowed: &[Vec<bool>]) -> u64 {
    fn go(row: usize, allowed: &[Vec<bool>], used: &mut Vec<bool>) -> u64 {
        if row == allowed.len() {
            return 1;
        }
        let mut total = 0;
        for col in 0..used.len() {
            if allowed[row][col] && !used[col] {
                used[col] = true;
                total += go(row + 1, allowed, used);
                used[col] = false;
            }
        }
        total
    }
    go(0, allowed, &mut vec![false; allowed.len()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_matchings() {
        let free = vec![vec![true; 4]; 4];
        assert_eq!(count_assignments(&free), 24);
        let mut one = free.clone();
        one[0] = vec![false, true, false, false];
        assert_eq!(count_assignments(&one), 6);
        let mut two = one.clone();
        two[1] = vec![true, false, false, false];
        assert_eq!(count_assignments(&two), 2);
    }

    #[test]
    fn empty_logs() {
        assert_eq!(analyze_anonymity("", ""), Err(AnonymityError::NoPayout));
        assert!(matches!(
            analyze_anonymity("{", ""),
            Err(AnonymityError::Malformed(_))
        ));
    }
}
