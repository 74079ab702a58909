//! Authenticated broadcast "chatroom" with a seeded delivery scheduler.
//!
//! Every message is signed. The channel verifies signatures against a
//! directory of chain orders registered per `(channel_id, round)` and refuses
//! anything that does not verify.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::groupcrypto::{sign, verify, GroupElement, Scalar, Signature};
use crate::onion::ChainOrder;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    AnnouncePk,
    OnionPost,
    StagePost,
    FinalList,
    SigTag,
    BlameOpen,
    BlameEvidence,
    BlameProof,
}

impl MessageKind {
    pub const ALL: [MessageKind; 8] = [
        MessageKind::AnnouncePk,
        MessageKind::OnionPost,
        MessageKind::StagePost,
        MessageKind::FinalList,
        MessageKind::SigTag,
        MessageKind::BlameOpen,
        MessageKind::BlameEvidence,
        MessageKind::BlameProof,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Slot {
    pub channel_id: [u8; 32],
    pub round: u64,
    pub sender_position: u16,
    pub kind: MessageKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedMessage {
    pub channel_id: [u8; 32],
    pub round: u64,
    pub sender_position: u16,
    pub kind: MessageKind,
    pub payload: Vec<u8>,
    pub sig: Signature,
}

fn header(
    channel_id: &[u8; 32],
    round: u64,
    pos: u16,
    kind: MessageKind,
    payload: &[u8],
) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 8 + 2 + 1 + 4 + payload.len());
    out.extend_from_slice(channel_id);
    out.extend_from_slice(&round.to_be_bytes());
    out.extend_from_slice(&pos.to_be_bytes());
    out.push(kind.code());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    out
}

impl SignedMessage {
    pub fn new(
        sk: &Scalar,
        channel_id: [u8; 32],
        round: u64,
        sender_position: u16,
        kind: MessageKind,
        payload: Vec<u8>,
    ) -> Self {
        let mut msg = SignedMessage {
            channel_id,
            round,
            sender_position,
            kind,
            payload,
            sig: sign(sk, b""),
        };
        msg.sig = sign(sk, &msg.signing_bytes());
        msg
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut out = b"tumbler/msg".to_vec();
        out.extend(header(
            &self.channel_id,
            self.round,
            self.sender_position,
            self.kind,
            &self.payload,
        ));
        out
    }

    pub fn verify_under(&self, pk: &GroupElement) -> bool {
        verify(pk, &self.signing_bytes(), &self.sig)
    }

    pub fn slot(&self) -> Slot {
        Slot {
            channel_id: self.channel_id,
            round: self.round,
            sender_position: self.sender_position,
            kind: self.kind,
        }
    }

    /// Verifies against the sender's key in `order`: `pk_enc` for
    /// announcements, `pk_sig` for everything else.
    pub fn verify_in(&self, order: &ChainOrder) -> bool {
        let Some(entry) = order.entry(self.sender_position) else {
            return false;
        };
        match self.kind {
            MessageKind::AnnouncePk => {
                self.payload == entry.pk_enc.to_bytes() && self.verify_under(&entry.pk_enc)
            }
            _ => self.verify_under(&entry.pk_sig),
        }
    }

    /// Self-contained encoding, used to carry signed originals inside proofs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = header(
            &self.channel_id,
            self.round,
            self.sender_position,
            self.kind,
            &self.payload,
        );
        out.extend(self.sig.to_bytes());
        out
    }

    /// Parses one message from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn from_bytes_prefix(bytes: &[u8]) -> Option<(Self, usize)> {
        if bytes.len() < 47 {
            return None;
        }
        let channel_id: [u8; 32] = bytes[..32].try_into().ok()?;
        let round = u64::from_be_bytes(bytes[32..40].try_into().ok()?);
        let sender_position = u16::from_be_bytes(bytes[40..42].try_into().ok()?);
        let kind = MessageKind::from_code(bytes[42])?;
        let len = u32::from_be_bytes(bytes[43..47].try_into().ok()?) as usize;
        let end = 47usize.checked_add(len)?;
        let sig_end = end.checked_add(Signature::<crate::groupcrypto::Secp256k1>::LEN)?;
        if bytes.len() < sig_end {
            return None;
        }
        let sig = Signature::from_bytes(&bytes[end..sig_end])?;
        Some((
            SignedMessage {
                channel_id,
                round,
                sender_position,
                kind,
                payload: bytes[47..end].to_vec(),
                sig,
            },
            sig_end,
        ))
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        match Self::from_bytes_prefix(bytes)? {
            (m, used) if used == bytes.len() => Some(m),
            _ => None,
        }
    }

    pub fn record(&self, seq: u64, tick: u64) -> TranscriptRecord {
        TranscriptRecord {
            seq,
            tick,
            channel_id: hex::encode(self.channel_id),
            round: self.round,
            sender_position: self.sender_position,
            kind: self.kind,
            payload: hex::encode(&self.payload),
            sig: hex::encode(self.sig.to_bytes()),
        }
    }
}

/// One line of `channel.jsonl`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub seq: u64,
    pub tick: u64,
    pub channel_id: String,
    pub round: u64,
    pub sender_position: u16,
    pub kind: MessageKind,
    pub payload: String,
    pub sig: String,
}

impl TranscriptRecord {
    pub fn to_message(&self) -> Option<SignedMessage> {
        Some(SignedMessage {
            channel_id: hex::decode(&self.channel_id).ok()?.try_into().ok()?,
            round: self.round,
            sender_position: self.sender_position,
            kind: self.kind,
            payload: hex::decode(&self.payload).ok()?,
            sig: Signature::from_bytes(&hex::decode(&self.sig).ok()?)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum ChannelError {
    #[error("signature does not verify")]
    InvalidSignature,
    #[error("no chain order registered for this channel and round")]
    UnknownChannel,
}

/// Test hook applied to accepted broadcasts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FaultAction {
    /// Deliver only to these recipients.
    DeliverOnlyTo(Vec<usize>),
    /// Refuse the message outright; it is neither delivered nor retained.
    Drop,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FaultRule {
    pub channel_id: Option<[u8; 32]>,
    pub sender_position: u16,
    pub kind: MessageKind,
    pub action: FaultAction,
}

impl FaultRule {
    fn matches(&self, m: &SignedMessage) -> bool {
        self.channel_id.is_none_or(|c| c == m.channel_id)
            && self.sender_position == m.sender_position
            && self.kind == m.kind
    }
}

struct Pending {
    msg: SignedMessage,
    recipients: Vec<usize>,
}

pub struct Channel {
    now: u64,
    max_delay: u64,
    rng: ChaCha20Rng,
    seq: u64,
    directory: HashMap<([u8; 32], u64), (ChainOrder, Vec<usize>)>,
    pending: BTreeMap<(u64, u64), Pending>,
    last_due: HashMap<([u8; 32], u16), u64>,
    slots: HashMap<Slot, SignedMessage>,
    equivocations: HashMap<Slot, (SignedMessage, SignedMessage)>,
    transcript: Vec<(u64, SignedMessage)>,
    faults: Vec<FaultRule>,
}

impl Channel {
    pub fn new(seed: u64, max_delay: u64) -> Self {
        Channel {
            now: 0,
            max_delay: max_delay.max(1),
            rng: ChaCha20Rng::seed_from_u64(seed),
            seq: 0,
            directory: HashMap::new(),
            pending: BTreeMap::new(),
            last_due: HashMap::new(),
            slots: HashMap::new(),
            equivocations: HashMap::new(),
            transcript: Vec::new(),
            faults: Vec::new(),
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// Registers the chain order of a mixing round and the recipients that
    /// hear its messages.
    pub fn register(
        &mut self,
        channel_id: [u8; 32],
        round: u64,
        order: ChainOrder,
        recipients: Vec<usize>,
    ) {
        self.directory
            .insert((channel_id, round), (order, recipients));
    }

    pub fn order(&self, channel_id: &[u8; 32], round: u64) -> Option<&ChainOrder> {
        self.directory.get(&(*channel_id, round)).map(|(o, _)| o)
    }

    pub fn add_fault(&mut self, rule: FaultRule) {
        self.faults.push(rule);
    }

    pub fn broadcast(&mut self, msg: SignedMessage) -> Result<(), ChannelError> {
        let (order, recipients) = self
            .directory
            .get(&(msg.channel_id, msg.round))
            .ok_or(ChannelError::UnknownChannel)?;
        if !msg.verify_in(order) {
            return Err(ChannelError::InvalidSignature);
        }
        let mut recipients = recipients.clone();
        for rule in self.faults.iter().filter(|r| r.matches(&msg)) {
            match &rule.action {
                FaultAction::Drop => return Ok(()),
                FaultAction::DeliverOnlyTo(only) => recipients.retain(|r| only.contains(r)),
            }
        }
        let slot = msg.slot();
        match self.slots.get(&slot) {
            Some(first) if first == &msg => return Ok(()),
            Some(first) => {
                self.equivocations
                    .entry(slot)
                    .or_insert_with(|| (first.clone(), msg.clone()));
            }
            None => {
                self.slots.insert(slot, msg.clone());
            }
        }
        let delay = self.rng.gen_range(1..=self.max_delay);
        let sender = (msg.channel_id, msg.sender_position);
        let due = (self.now + delay).max(self.last_due.get(&sender).copied().unwrap_or(0));
        self.last_due.insert(sender, due);
        self.transcript.push((self.now, msg.clone()));
        self.pending
            .insert((due, self.seq), Pending { msg, recipients });
        self.seq += 1;
        Ok(())
    }

    /// Advances the clock one tick and returns every delivery now due, in
    /// send order, fanned out to recipients in ascending order.
    pub fn tick(&mut self) -> Vec<(usize, SignedMessage)> {
        self.now += 1;
        let later = self.pending.split_off(&(self.now + 1, 0));
        let due = std::mem::replace(&mut self.pending, later);
        let mut out = Vec::new();
        for (_, p) in due {
            for r in p.recipients {
                out.push((r, p.msg.clone()));
            }
        }
        out
    }

    pub fn is_idle(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn equivocation_check(&self, slot: &Slot) -> Option<(SignedMessage, SignedMessage)> {
        self.equivocations.get(slot).cloned()
    }

    pub fn equivocations(&self) -> impl Iterator<Item = &(SignedMessage, SignedMessage)> {
        self.equivocations.values()
    }

    /// Every accepted message in acceptance order, with its send tick.
    pub fn transcript(&self) -> &[(u64, SignedMessage)] {
        &self.transcript
    }

    pub fn export_jsonl(&self) -> String {
        let mut out = String::new();
        for (i, (tick, m)) in self.transcript.iter().enumerate() {
            out.push_str(
                &serde_json::to_string(&m.record(i as u64, *tick)).expect("records serialize"),
            );
            out.push('\n');
        }
        out
    }
}
