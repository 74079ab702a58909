//! Blame evaluation: replay of the signed transcript with revealed keys, and
//! resolution of disputes that the transcript alone cannot settle.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::channel::{MessageKind, SignedMessage};
use crate::groupcrypto::{GroupElement, Scalar, SCALAR_LEN};
use crate::onion::{
    is_permutation, peel_one, ChainOrder, Destination, Onion, Peeled, StageItems, StagePost,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BlameReason {
    BadPeel,
    BadEvidence,
    FalseAccusation,
    Timeout,
    Silent,
}

/// A conflict over what `accused` posted, raised when the signed post is
/// missing from the local transcript and the neighbours' claims disagree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dispute {
    pub accused: u16,
    pub accusers: Vec<u16>,
    pub accused_pk_sig: GroupElement,
    pub channel_id: [u8; 32],
    pub round: u64,
    /// Serialized posts the accusers attribute to the accused.
    pub claims: Vec<Vec<u8>>,
    /// What an honest peel by the accused must contain, when computable.
    pub expected: Option<Vec<Vec<u8>>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BlameVerdict {
    pub reasons: BTreeMap<u16, BlameReason>,
    pub pending: Vec<Dispute>,
}

impl BlameVerdict {
    pub fn ejected(&self) -> BTreeSet<u16> {
        self.reasons.keys().copied().collect()
    }

    pub fn reason(&self, position: u16) -> Option<BlameReason> {
        self.reasons.get(&position).copied()
    }

    /// Keeps the first reason recorded for a position.
    pub fn eject(&mut self, position: u16, reason: BlameReason) {
        self.reasons.entry(position).or_insert(reason);
    }

    pub fn is_clean(&self) -> bool {
        self.reasons.is_empty() && self.pending.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlameEvidence {
    pub position: u16,
    pub revealed_sk: Scalar,
    pub claimed_in: Option<StagePost>,
    pub claimed_out: Option<StagePost>,
}

impl BlameEvidence {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.position.to_be_bytes());
        out.extend_from_slice(&self.revealed_sk.to_bytes());
        for post in [&self.claimed_in, &self.claimed_out] {
            let bytes = post.as_ref().map(StagePost::to_bytes).unwrap_or_default();
            out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
            out.extend_from_slice(&bytes);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], n: usize) -> Option<Self> {
        let position = u16::from_be_bytes(bytes.get(..2)?.try_into().ok()?);
        let revealed_sk = Scalar::from_slice(bytes.get(2..2 + SCALAR_LEN)?)?;
        let mut rest = &bytes[2 + SCALAR_LEN..];
        let mut posts = Vec::new();
        for _ in 0..2 {
            let len = u32::from_be_bytes(rest.get(..4)?.try_into().ok()?) as usize;
            let body = rest.get(4..4 + len)?;
            posts.push(if len == 0 {
                None
            } else {
                Some(StagePost::from_bytes(body, n).ok()?)
            });
            rest = &rest[4 + len..];
        }
        if !rest.is_empty() {
            return None;
        }
        let claimed_out = posts.pop()?;
        let claimed_in = posts.pop()?;
        Some(BlameEvidence {
            position,
            revealed_sk,
            claimed_in,
            claimed_out,
        })
    }
}

fn stage_kind(position: u16, n: usize) -> MessageKind {
    if position as usize == n {
        MessageKind::FinalList
    } else {
        MessageKind::StagePost
    }
}

fn peel_all(sk: &Scalar, input: &[Onion]) -> Option<Vec<Vec<u8>>> {
    input
        .iter()
        .enumerate()
        .map(|(i, o)| peel_one(sk, o, i).ok().map(|p| p.to_bytes()))
        .collect()
}

/// Removes every layer of one onion, in chain order.
fn full_peel(onion: &Onion, keys: &BTreeMap<u16, Scalar>) -> Option<Destination> {
    let mut cur = onion.clone();
    for sk in keys.values() {
        match peel_one(sk, &cur, 0).ok()? {
            Peeled::Onion(o) => cur = o,
            Peeled::Destination(d) => return Some(d),
        }
    }
    None
}

/// Replays one round. `transcript` must hold only messages of that round;
/// unauthenticated messages are ignored. `initial_onions` lists the posted
/// onions by creator position.
pub fn blame_replay(
    all_evidence: &[BlameEvidence],
    transcript: &[SignedMessage],
    initial_onions: &[Onion],
    order: &ChainOrder,
) -> BlameVerdict {
    let n = order.len();
    let mut v = BlameVerdict::default();
    let mut evidence: BTreeMap<u16, &BlameEvidence> = BTreeMap::new();
    for e in all_evidence {
        evidence.entry(e.position).or_insert(e);
    }
    let mut keys = BTreeMap::new();
    for entry in order.entries() {
        match evidence.get(&entry.position) {
            None => v.eject(entry.position, BlameReason::Timeout),
            Some(e) if GroupElement::base_pow(&e.revealed_sk) != entry.pk_enc => {
                v.eject(entry.position, BlameReason::BadEvidence)
            }
            Some(e) => {
                keys.insert(entry.position, e.revealed_sk);
            }
        }
    }

    let authentic: Vec<&SignedMessage> = transcript.iter().filter(|m| m.verify_in(order)).collect();

    // Signed stage posts; `None` marks a malformed or equivocated post.
    let mut posts: BTreeMap<u16, Option<StagePost>> = BTreeMap::new();
    for p in 1..=n as u16 {
        let kind = stage_kind(p, n);
        let msgs: Vec<_> = authentic
            .iter()
            .filter(|m| m.sender_position == p && m.kind == kind)
            .collect();
        let Some(first) = msgs.first() else { continue };
        let equivocated = msgs.iter().any(|m| m.payload != first.payload);
        let parsed = StagePost::from_bytes(&first.payload, n)
            .ok()
            .filter(|s| s.position == p && s.is_well_formed(n));
        if equivocated || parsed.is_none() {
            v.eject(p, BlameReason::BadPeel);
            posts.insert(p, None);
        } else {
            posts.insert(p, parsed);
        }
    }
    let malformed_seen = posts.values().any(Option::is_none);
    let initial = (initial_onions.len() == n).then(|| StagePost {
        position: 0,
        items: StageItems::Onions(initial_onions.to_vec()),
    });
    let input_of = |p: u16, outs: &BTreeMap<u16, StagePost>| -> Option<StagePost> {
        if p == 1 {
            initial.clone()
        } else {
            outs.get(&(p - 1)).cloned()
        }
    };

    let mut effective: BTreeMap<u16, StagePost> = posts
        .iter()
        .filter_map(|(p, s)| s.clone().map(|s| (*p, s)))
        .collect();

    for (&p, e) in &evidence {
        if let (Some(claim), Some(Some(auth))) = (&e.claimed_out, posts.get(&p)) {
            if claim != auth {
                v.eject(p, BlameReason::FalseAccusation);
            }
        }
        if let (Some(claim), Some(auth)) = (&e.claimed_in, input_of(p, &effective)) {
            if claim.items != auth.items {
                v.eject(p, BlameReason::FalseAccusation);
            }
        }
    }

    let mut disputes = Vec::new();
    for p in 1..n as u16 {
        if posts.contains_key(&p) {
            continue;
        }
        let own = evidence.get(&p).and_then(|e| e.claimed_out.clone());
        let next = evidence.get(&(p + 1)).and_then(|e| e.claimed_in.clone());
        match (own, next) {
            (Some(a), Some(b)) if a.items == b.items => {
                effective.insert(p, a);
            }
            (_, Some(b)) => {
                let mut accusers: Vec<u16> = Vec::new();
                if p > 1 {
                    accusers.push(p - 1);
                }
                accusers.push(p + 1);
                disputes.push(Dispute {
                    accused: p,
                    accusers,
                    accused_pk_sig: order.entry(p).expect("position in range").pk_sig.clone(),
                    channel_id: [0; 32],
                    round: 0,
                    claims: vec![b.to_bytes()],
                    expected: None,
                });
            }
            _ => {}
        }
    }

    let mut expected_sets: BTreeMap<u16, Vec<Vec<u8>>> = BTreeMap::new();
    let mut peel_failed = false;
    for p in 1..=n as u16 {
        let Some(sk) = keys.get(&p) else { continue };
        let Some(input) = input_of(p, &effective) else {
            continue;
        };
        let Some(onions) = input.onions() else {
            continue;
        };
        match peel_all(sk, onions) {
            None => peel_failed = true,
            Some(expected) => {
                if let Some(out) = effective.get(&p) {
                    if !is_permutation(&out.items.blobs(), &expected) {
                        v.eject(p, BlameReason::BadPeel);
                    }
                }
                expected_sets.insert(p, expected);
            }
        }
    }
    if peel_failed && keys.len() == n && initial.is_some() {
        for (i, onion) in initial_onions.iter().enumerate() {
            if full_peel(onion, &keys).is_none() {
                v.eject(i as u16 + 1, BlameReason::BadPeel);
            }
        }
    }

    // A blame opener must be able to point at something: a bad peel, a
    // malformed post, or its own destination missing from the final list.
    let channel_round = authentic
        .first()
        .map(|m| (m.channel_id, m.round))
        .unwrap_or_default();
    let justified = malformed_seen || v.reasons.values().any(|r| *r == BlameReason::BadPeel);
    if !justified && keys.len() == n && initial.is_some() {
        if let Some(list) = effective.get(&(n as u16)).and_then(|s| s.destinations()) {
            let openers: BTreeSet<u16> = authentic
                .iter()
                .filter(|m| m.kind == MessageKind::BlameOpen)
                .map(|m| m.sender_position)
                .collect();
            for o in openers {
                let Some(onion) = initial_onions.get(o as usize - 1) else {
                    continue;
                };
                if full_peel(onion, &keys).is_some_and(|d| list.contains(&d)) {
                    v.eject(o, BlameReason::FalseAccusation);
                }
            }
        }
    }

    for mut d in disputes {
        d.channel_id = channel_round.0;
        d.round = channel_round.1;
        d.expected = expected_sets.get(&d.accused).cloned();
        v.pending.push(d);
    }
    v
}

/// The accused's own signed post, if `proof` carries one authenticated under
/// its key for the disputed round.
fn proven_post(d: &Dispute, proof: &SignedMessage, n: usize) -> Option<StagePost> {
    if proof.kind != MessageKind::BlameProof
        || proof.sender_position != d.accused
        || proof.channel_id != d.channel_id
        || proof.round != d.round
        || !proof.verify_under(&d.accused_pk_sig)
    {
        return None;
    }
    let mut rest = proof.payload.as_slice();
    while let Some((inner, used)) = SignedMessage::from_bytes_prefix(rest) {
        rest = &rest[used..];
        if inner.sender_position == d.accused
            && inner.channel_id == d.channel_id
            && inner.round == d.round
            && inner.kind == stage_kind(d.accused, n)
            && inner.verify_under(&d.accused_pk_sig)
        {
            return StagePost::from_bytes(&inner.payload, n).ok();
        }
    }
    None
}

/// Settles pending disputes from proofs tagged with their arrival tick,
/// relative to the start of the window. A proof counts only if it arrives
/// strictly before `window` and its signatures verify.
pub fn blame_resolve_window(
    pending: &BlameVerdict,
    proofs: &[(u64, SignedMessage)],
    window: u64,
    n: usize,
) -> BlameVerdict {
    let mut v = BlameVerdict {
        reasons: pending.reasons.clone(),
        pending: Vec::new(),
    };
    for d in &pending.pending {
        let shown = proofs
            .iter()
            .filter(|(t, _)| *t < window)
            .find_map(|(_, m)| proven_post(d, m, n));
        match shown {
            Some(post) => {
                let honest_peel = d
                    .expected
                    .as_ref()
                    .is_none_or(|exp| is_permutation(&post.items.blobs(), exp));
                if !honest_peel {
                    v.eject(d.accused, BlameReason::BadPeel);
                } else if !d.claims.contains(&post.to_bytes()) {
                    for a in &d.accusers {
                        v.eject(*a, BlameReason::FalseAccusation);
                    }
                }
            }
            None => {
                v.eject(d.accused, BlameReason::Timeout);
                for a in &d.accusers {
                    v.eject(*a, BlameReason::Timeout);
                }
            }
        }
    }
    v
}

/// Messages of one round as received, with arrival ticks.
#[derive(Clone, Debug, Default)]
pub struct RoundLog {
    entries: Vec<(u64, SignedMessage)>,
}

impl RoundLog {
    /// Returns false for an exact duplicate.
    pub fn push(&mut self, tick: u64, msg: SignedMessage) -> bool {
        if self.entries.iter().any(|(_, m)| m == &msg) {
            return false;
        }
        self.entries.push((tick, msg));
        true
    }

    pub fn entries(&self) -> &[(u64, SignedMessage)] {
        &self.entries
    }

    pub fn messages(&self) -> Vec<SignedMessage> {
        self.entries.iter().map(|(_, m)| m.clone()).collect()
    }

    pub fn first(&self, position: u16, kind: MessageKind) -> Option<&SignedMessage> {
        self.entries
            .iter()
            .map(|(_, m)| m)
            .find(|m| m.sender_position == position && m.kind == kind)
    }

    pub fn senders(&self, kind: MessageKind) -> BTreeSet<u16> {
        self.entries
            .iter()
            .filter(|(_, m)| m.kind == kind)
            .map(|(_, m)| m.sender_position)
            .collect()
    }

    /// Initial onions by creator position, if all `n` were posted intact.
    pub fn initial_onions(&self, n: usize) -> Option<Vec<Onion>> {
        (1..=n as u16)
            .map(|p| {
                self.first(p, MessageKind::OnionPost)
                    .and_then(|m| Onion::new(n, m.payload.clone()).ok())
            })
            .collect()
    }

    pub fn evidence(&self, n: usize) -> Vec<BlameEvidence> {
        let mut seen = BTreeSet::new();
        self.entries
            .iter()
            .filter(|(_, m)| m.kind == MessageKind::BlameEvidence)
            .filter_map(|(_, m)| {
                BlameEvidence::from_bytes(&m.payload, n).filter(|e| e.position == m.sender_position)
            })
            .filter(|e| seen.insert(e.position))
            .collect()
    }

    pub fn proofs(&self) -> Vec<(u64, SignedMessage)> {
        self.entries
            .iter()
            .filter(|(_, m)| m.kind == MessageKind::BlameProof)
            .cloned()
            .collect()
    }

    pub fn blame_opened(&self) -> bool {
        self.entries
            .iter()
            .any(|(_, m)| m.kind == MessageKind::BlameOpen)
    }

    /// Who stalled a round that ended without blame: absent announcements or
    /// onions mark their senders silent; otherwise the first missing stage
    /// post, or every missing signature tag, times out.
    pub fn missing_parties(&self, n: usize) -> BlameVerdict {
        let mut v = BlameVerdict::default();
        let all: BTreeSet<u16> = (1..=n as u16).collect();
        for kind in [MessageKind::AnnouncePk, MessageKind::OnionPost] {
            let have = self.senders(kind);
            if have.len() < n {
                for p in all.difference(&have) {
                    v.eject(*p, BlameReason::Silent);
                }
                return v;
            }
        }
        if let Some(p) = (1..=n as u16).find(|p| self.first(*p, stage_kind(*p, n)).is_none()) {
            v.eject(p, BlameReason::Timeout);
            return v;
        }
        let tags = self.senders(MessageKind::SigTag);
        for p in all.difference(&tags) {
            v.eject(*p, BlameReason::Timeout);
        }
        v
    }

    /// Verdict as a passive observer would reach it from this log alone.
    pub fn observer_verdict(
        &self,
        order: &ChainOrder,
        phase_timeout: u64,
        window: u64,
    ) -> BlameVerdict {
        let n = order.len();
        if !self.blame_opened() {
            return self.missing_parties(n);
        }
        let evidence = self.evidence(n);
        let last_ev = self
            .entries
            .iter()
            .filter(|(_, m)| m.kind == MessageKind::BlameEvidence)
            .map(|(t, _)| *t)
            .max()
            .unwrap_or(0);
        let start = if evidence.len() == n {
            last_ev
        } else {
            last_ev + phase_timeout
        };
        let initial = self.initial_onions(n).unwrap_or_default();
        let v = blame_replay(&evidence, &self.messages(), &initial, order);
        let proofs: Vec<_> = self
            .proofs()
            .into_iter()
            .map(|(t, m)| (t.saturating_sub(start), m))
            .collect();
        blame_resolve_window(&v, &proofs, window, n)
    }
}
