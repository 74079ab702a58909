//! Per-user protocol state machine.
//!
//! A participant reacts to three kinds of input (clock ticks, channel
//! messages, ledger events) and answers with messages to broadcast and
//! ledger transactions to submit. It holds no shared state.

mod adversary;
mod blame;

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{MessageKind, SignedMessage};
use crate::groupcrypto::{derive_sig_keypair, keygen, sign, verify, KeyPair, Signature};
use crate::ledger::{
    payout_message_bytes, AccountId, EscrowId, EscrowState, EventKind, Ledger, LedgerEvent,
    PayoutMessage, Phase as EscrowPhase, Transaction,
};
use crate::onion::{
    build_onion, check_destinations, order_participants, peel_stage, wrap_layers, ChainOrder,
    Destination, Onion, StageItems, StagePost,
};

pub use adversary::{make_adversary, AdversaryKind, InvalidAdversaryParams, Role};
pub use blame::{
    blame_replay, blame_resolve_window, BlameEvidence, BlameReason, BlameVerdict, Dispute, RoundLog,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Idle,
    Deposited,
    Announced,
    Ordered,
    Shuffling,
    Checking,
    Blaming,
    Signing,
    Done,
    Aborted,
}

impl Phase {
    fn in_round(self) -> bool {
        matches!(
            self,
            Phase::Announced
                | Phase::Ordered
                | Phase::Shuffling
                | Phase::Checking
                | Phase::Signing
                | Phase::Blaming
        )
    }
}

/// Durations in ticks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Timeouts {
    pub phase: u64,
    pub blame_window: u64,
    pub max_delay: u64,
}

impl Default for Timeouts {
    fn default() -> Self {
        Timeouts {
            phase: 10,
            blame_window: 3,
            max_delay: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RestartPolicy {
    #[default]
    StayIfPossible,
    FreshEscrow,
}

/// Blame-open reason codes carried in the message payload.
pub const OPEN_CHECK_FAILED: u8 = 0;
pub const OPEN_MALFORMED: u8 = 1;
pub const OPEN_INTEGRITY: u8 = 2;

#[derive(Clone, Debug)]
pub struct ParticipantConfig {
    pub account: AccountId,
    pub destination: Destination,
    pub escrow: EscrowId,
    pub seed: u64,
    pub timeouts: Timeouts,
    pub restart_policy: RestartPolicy,
    pub role: Role,
    /// Scripted exit: withdraw on first entering this phase.
    pub withdraw_at: Option<Phase>,
    /// First encryption keypair; generated from `seed` when absent.
    pub enc_keys: Option<KeyPair>,
}

impl ParticipantConfig {
    pub fn honest(
        account: AccountId,
        destination: Destination,
        escrow: EscrowId,
        seed: u64,
    ) -> Self {
        ParticipantConfig {
            account,
            destination,
            escrow,
            seed,
            timeouts: Timeouts::default(),
            restart_policy: RestartPolicy::default(),
            role: Role::Honest,
            withdraw_at: None,
            enc_keys: None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Input<'a> {
    Tick,
    Message(&'a SignedMessage),
    Ledger(&'a LedgerEvent),
}

#[derive(Clone, Debug, Default)]
pub struct Actions {
    pub messages: Vec<SignedMessage>,
    pub txs: Vec<Transaction>,
}

struct RoundState {
    escrow: EscrowId,
    channel_id: [u8; 32],
    round: u64,
    n: usize,
    accounts: BTreeMap<u16, AccountId>,
    order: ChainOrder,
    my_pos: u16,
    sig_keys: KeyPair,
    log: RoundLog,
    posts: BTreeMap<u16, StagePost>,
    my_input: Option<StagePost>,
    my_post: Option<StagePost>,
    final_list: Option<Vec<Destination>>,
    tags: Option<Vec<Signature>>,
    tags_complete_at: Option<u64>,
    submitted: bool,
    eval_at: Option<u64>,
    pending: Option<BlameVerdict>,
    last_progress: u64,
}

impl RoundState {
    fn stage_kind(&self, position: u16) -> MessageKind {
        if position as usize == self.n {
            MessageKind::FinalList
        } else {
            MessageKind::StagePost
        }
    }

    fn input(&self) -> Option<StagePost> {
        if self.my_pos == 1 {
            self.log.initial_onions(self.n).map(|o| StagePost {
                position: 0,
                items: StageItems::Onions(o),
            })
        } else {
            self.posts.get(&(self.my_pos - 1)).cloned()
        }
    }

    fn payout_bytes(&self, list: &[Destination]) -> Vec<u8> {
        payout_message_bytes(list, &self.escrow, self.round)
    }

    /// All `n` tags, once every one is present and verifies.
    fn verified_tags(&self) -> Option<Vec<Signature>> {
        let list = self.final_list.as_ref()?;
        let bytes = self.payout_bytes(list);
        self.order
            .entries()
            .iter()
            .map(|e| {
                let m = self.log.first(e.position, MessageKind::SigTag)?;
                let sig = Signature::from_bytes(&m.payload)?;
                verify(&e.pk_sig, &bytes, &sig).then_some(sig)
            })
            .collect()
    }
}

enum Wait {
    /// Waiting for the escrow to fill.
    Fill { since: u64 },
    /// A peer left; waiting for the buffer to refill before moving on.
    Stay { since: u64 },
}

pub struct Participant {
    cfg: ParticipantConfig,
    rng: ChaCha20Rng,
    phase: Phase,
    enc_keys: KeyPair,
    escrow: EscrowId,
    round: Option<RoundState>,
    last_round: Option<(EscrowId, u64)>,
    wait: Option<Wait>,
    hook_fired: bool,
    left: BTreeSet<AccountId>,
    moved: BTreeSet<AccountId>,
    early: Vec<SignedMessage>,
    withdraw_due: Option<u64>,
    verdicts: Vec<BlameVerdict>,
    deposits: usize,
}

impl Participant {
    pub fn new(cfg: ParticipantConfig) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        let enc_keys = cfg.enc_keys.clone().unwrap_or_else(|| keygen(&mut rng));
        Participant {
            escrow: cfg.escrow,
            cfg,
            rng,
            phase: Phase::Idle,
            enc_keys,
            round: None,
            last_round: None,
            wait: None,
            hook_fired: false,
            left: BTreeSet::new(),
            moved: BTreeSet::new(),
            early: Vec::new(),
            withdraw_due: None,
            verdicts: Vec::new(),
            deposits: 0,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn account(&self) -> AccountId {
        self.cfg.account
    }

    pub fn destination(&self) -> Destination {
        self.cfg.destination
    }

    pub fn role(&self) -> &Role {
        &self.cfg.role
    }

    pub fn escrow(&self) -> EscrowId {
        self.escrow
    }

    pub fn enc_pk(&self) -> &crate::groupcrypto::GroupElement {
        &self.enc_keys.pk
    }

    /// Verdicts of every failed round this participant took part in.
    pub fn verdicts(&self) -> &[BlameVerdict] {
        &self.verdicts
    }

    /// Deposit transactions issued so far.
    pub fn deposits(&self) -> usize {
        self.deposits
    }

    /// Nothing further will come from this participant.
    pub fn is_settled(&self) -> bool {
        match self.phase {
            Phase::Done => true,
            Phase::Aborted => self.withdraw_due.is_none(),
            Phase::Deposited => self.cfg.role == Role::Silent,
            _ => false,
        }
    }

    pub fn step(&mut self, now: u64, input: Input<'_>, ledger: &Ledger) -> Actions {
        let mut acts = Actions::default();
        match input {
            Input::Tick => self.on_tick(now, ledger, &mut acts),
            Input::Message(m) => self.on_message(now, m, &mut acts),
            Input::Ledger(e) => self.on_ledger(e),
        }
        acts
    }

    fn set_phase(&mut self, now: u64, phase: Phase, acts: &mut Actions) -> bool {
        self.phase = phase;
        if let Some(r) = self.round.as_mut() {
            r.last_progress = now;
        }
        if self.cfg.withdraw_at == Some(phase) && !self.hook_fired {
            self.hook_fired = true;
            self.withdraw_abort(acts);
            return false;
        }
        true
    }

    fn withdraw_abort(&mut self, acts: &mut Actions) {
        acts.txs.push(Transaction::Withdraw {
            escrow: self.escrow,
            from: self.cfg.account,
        });
        self.phase = Phase::Aborted;
        self.round = None;
        self.wait = None;
    }

    fn deposit(&mut self, now: u64, acts: &mut Actions) {
        acts.txs.push(Transaction::Deposit {
            escrow: self.escrow,
            from: self.cfg.account,
            pk_enc: self.enc_keys.pk.clone(),
        });
        self.deposits += 1;
        self.wait = Some(Wait::Fill { since: now });
        self.set_phase(now, Phase::Deposited, acts);
    }

    fn emit(&mut self, now: u64, msg: SignedMessage, acts: &mut Actions) {
        acts.messages.push(msg.clone());
        self.ingest(now, msg, acts);
    }

    fn sign_msg(&self, kind: MessageKind, payload: Vec<u8>) -> Option<SignedMessage> {
        let r = self.round.as_ref()?;
        Some(SignedMessage::new(
            &r.sig_keys.sk,
            r.channel_id,
            r.round,
            r.my_pos,
            kind,
            payload,
        ))
    }

    fn emit_signed(&mut self, now: u64, kind: MessageKind, payload: Vec<u8>, acts: &mut Actions) {
        if let Some(m) = self.sign_msg(kind, payload) {
            self.emit(now, m, acts);
        }
    }

    fn on_ledger(&mut self, e: &LedgerEvent) {
        let me = self.cfg.account;
        match e.kind() {
            EventKind::Payout if e.escrow() == self.escrow => {
                if e.payers().is_some_and(|p| p.contains(&me))
                    && !matches!(self.phase, Phase::Done | Phase::Aborted)
                {
                    self.phase = Phase::Done;
                    self.round = None;
                    self.wait = None;
                }
            }
            EventKind::Withdraw if e.escrow() == self.escrow => {
                if let Some(from) = e.from().filter(|f| *f != me) {
                    self.left.insert(from);
                }
            }
            EventKind::Deposit if e.escrow() != self.escrow => {
                if let Some(from) = e.from() {
                    self.moved.insert(from);
                }
            }
            _ => {}
        }
    }

    fn on_message(&mut self, now: u64, m: &SignedMessage, acts: &mut Actions) {
        if (!self.phase.in_round() && self.phase != Phase::Deposited)
            || self.cfg.role == Role::Silent
        {
            return;
        }
        match &self.round {
            Some(r) if r.channel_id == m.channel_id && r.round == m.round => {
                self.ingest(now, m.clone(), acts)
            }
            Some(_) => {}
            None => self.early.push(m.clone()),
        }
    }

    fn on_tick(&mut self, now: u64, ledger: &Ledger, acts: &mut Actions) {
        if let Some(due) = self.withdraw_due {
            if now >= due {
                acts.txs.push(Transaction::Withdraw {
                    escrow: self.escrow,
                    from: self.cfg.account,
                });
                self.withdraw_due = None;
            }
            return;
        }
        match self.phase {
            Phase::Done | Phase::Aborted => return,
            Phase::Idle => return self.deposit(now, acts),
            _ if self.cfg.role == Role::Silent => return,
            _ => {}
        }
        self.handle_leaves(now, ledger, acts);
        if self.round.is_none() && self.phase == Phase::Deposited {
            self.check_start(now, ledger, acts);
        }
        if self.round.is_some() {
            self.round_timers(now, ledger, acts);
        }
    }

    /// A round member who withdrew without moving to another escrow has
    /// left for good; the round cannot finish.
    fn handle_leaves(&mut self, now: u64, ledger: &Ledger, acts: &mut Actions) {
        let left = std::mem::take(&mut self.left);
        let moved = std::mem::take(&mut self.moved);
        let gone: BTreeSet<AccountId> = left.difference(&moved).copied().collect();
        let Some(r) = &self.round else { return };
        if gone.is_empty()
            || self.phase == Phase::Blaming
            || !r.accounts.values().any(|a| gone.contains(a))
        {
            return;
        }
        let r = self.round.take().expect("checked above");
        match self.cfg.restart_policy {
            RestartPolicy::FreshEscrow => {
                let survivors: Vec<AccountId> = r
                    .accounts
                    .values()
                    .filter(|a| !gone.contains(a))
                    .copied()
                    .collect();
                self.restart(now, r.escrow, r.round, survivors, ledger, acts);
            }
            RestartPolicy::StayIfPossible => {
                self.wait = Some(Wait::Stay { since: now });
                self.set_phase(now, Phase::Deposited, acts);
            }
        }
    }

    fn check_start(&mut self, now: u64, ledger: &Ledger, acts: &mut Actions) {
        let me = self.cfg.account;
        let t = self.cfg.timeouts.phase;
        let Some(st) = ledger.escrow(&self.escrow) else {
            if let Some(Wait::Fill { since }) = self.wait {
                if now - since >= 3 * t {
                    self.withdraw_abort(acts);
                }
            }
            return;
        };
        if st.phase == EscrowPhase::Mixing
            && st.in_buffer(&me)
            && self.last_round != Some((self.escrow, st.round))
        {
            let st = st.clone();
            return self.start_round(now, &st, acts);
        }
        match self.wait {
            Some(Wait::Stay { since }) if now - since >= t => {
                let mut survivors: Vec<AccountId> = st.buffer.iter().map(|m| m.account).collect();
                survivors.sort();
                let (escrow, round) = (st.id, st.round);
                self.restart(now, escrow, round, survivors, ledger, acts);
            }
            Some(Wait::Fill { .. }) if st.phase == EscrowPhase::Mixing && !st.in_buffer(&me) => {
                self.wait = Some(Wait::Fill { since: now });
            }
            Some(Wait::Fill { since }) if now - since >= 3 * t => self.withdraw_abort(acts),
            None => self.wait = Some(Wait::Fill { since: now }),
            _ => {}
        }
    }

    fn start_round(&mut self, now: u64, st: &EscrowState, acts: &mut Actions) {
        let pks: Vec<_> = st.buffer.iter().map(|m| m.pk_enc.clone()).collect();
        let Ok(order) = order_participants(&pks, &st.channel_id) else {
            return self.withdraw_abort(acts);
        };
        let Some(my_pos) = order.position_of(&self.enc_keys.pk) else {
            return self.withdraw_abort(acts);
        };
        let accounts = order
            .entries()
            .iter()
            .map(|e| {
                let member = st
                    .buffer
                    .iter()
                    .find(|m| m.pk_enc == e.pk_enc)
                    .expect("order built from buffer");
                (e.position, member.account)
            })
            .collect();
        self.round = Some(RoundState {
            escrow: st.id,
            channel_id: st.channel_id,
            round: st.round,
            n: order.len(),
            accounts,
            sig_keys: derive_sig_keypair(&st.channel_id, &self.enc_keys),
            order,
            my_pos,
            log: RoundLog::default(),
            posts: BTreeMap::new(),
            my_input: None,
            my_post: None,
            final_list: None,
            tags: None,
            tags_complete_at: None,
            submitted: false,
            eval_at: None,
            pending: None,
            last_progress: now,
        });
        self.last_round = Some((st.id, st.round));
        self.wait = None;
        if !self.set_phase(now, Phase::Announced, acts) {
            return;
        }
        let announce = SignedMessage::new(
            &self.enc_keys.sk,
            st.channel_id,
            st.round,
            my_pos,
            MessageKind::AnnouncePk,
            self.enc_keys.pk.to_bytes(),
        );
        self.emit(now, announce, acts);
        let early = std::mem::take(&mut self.early);
        for m in early {
            if m.channel_id == st.channel_id && m.round == st.round {
                self.ingest(now, m, acts);
            }
        }
    }

    fn ingest(&mut self, now: u64, m: SignedMessage, acts: &mut Actions) {
        let Some(r) = self.round.as_mut() else { return };
        if m.channel_id != r.channel_id || m.round != r.round || !r.log.push(now, m.clone()) {
            return;
        }
        r.last_progress = now;
        let n = r.n;
        let malformed = match m.kind {
            MessageKind::StagePost | MessageKind::FinalList => {
                let p = m.sender_position;
                let parsed = (m.kind == r.stage_kind(p))
                    .then(|| StagePost::from_bytes(&m.payload, n).ok())
                    .flatten()
                    .filter(|s| s.position == p && s.is_well_formed(n));
                match parsed {
                    Some(s) => {
                        r.posts.entry(p).or_insert(s);
                        false
                    }
                    None => true,
                }
            }
            MessageKind::OnionPost => Onion::new(n, m.payload.clone()).is_err(),
            MessageKind::BlameOpen => return self.enter_blame(now, acts),
            _ => false,
        };
        if malformed {
            return self.open_blame(now, OPEN_MALFORMED, acts);
        }
        self.advance(now, acts);
    }

    /// Takes every protocol step the current state allows.
    fn advance(&mut self, now: u64, acts: &mut Actions) {
        loop {
            let Some(r) = &self.round else { return };
            let n = r.n;
            match self.phase {
                Phase::Announced if r.log.senders(MessageKind::AnnouncePk).len() == n => {
                    if !self.set_phase(now, Phase::Ordered, acts) {
                        return;
                    }
                    let r = self.round.as_ref().expect("round active");
                    let Ok(onion) = build_onion(&self.cfg.destination, &r.order, &mut self.rng)
                    else {
                        return self.withdraw_abort(acts);
                    };
                    self.emit_signed(now, MessageKind::OnionPost, onion.into_blob(), acts);
                }
                Phase::Ordered if r.log.senders(MessageKind::OnionPost).len() == n => {
                    if !self.set_phase(now, Phase::Shuffling, acts) {
                        return;
                    }
                }
                Phase::Shuffling => {
                    if r.my_post.is_none() {
                        let Some(input) = r.input() else { return };
                        self.peel_and_post(now, input, acts);
                        continue;
                    }
                    let Some(list) = r
                        .posts
                        .get(&(n as u16))
                        .and_then(|s| s.destinations())
                        .map(<[_]>::to_vec)
                    else {
                        return;
                    };
                    self.check_and_sign(now, list, acts);
                }
                Phase::Signing => {
                    if r.tags_complete_at.is_none() && r.log.senders(MessageKind::SigTag).len() == n
                    {
                        if let Some(tags) = r.verified_tags() {
                            let r = self.round.as_mut().expect("round active");
                            r.tags = Some(tags);
                            r.tags_complete_at = Some(now);
                        }
                    }
                    return;
                }
                _ => return,
            }
        }
    }

    fn peel_and_post(&mut self, now: u64, input: StagePost, acts: &mut Actions) {
        let r = self.round.as_ref().expect("round active");
        let (my_pos, n) = (r.my_pos, r.n);
        let onions = input.onions().unwrap_or_default().to_vec();
        let mut post = match peel_stage(&self.enc_keys.sk, my_pos, &onions, &mut self.rng) {
            Ok(p) => p,
            Err(_) => return self.open_blame(now, OPEN_INTEGRITY, acts),
        };
        match &self.cfg.role {
            Role::Dropper { index } => match &mut post.items {
                StageItems::Onions(v) => drop(v.remove(index % v.len())),
                StageItems::Destinations(v) => drop(v.remove(index % v.len())),
            },
            Role::Modifier { index, substitute } => match &mut post.items {
                StageItems::Destinations(v) => {
                    let i = index % v.len();
                    v[i] = *substitute;
                }
                StageItems::Onions(v) => {
                    let keys = &r.order.enc_keys()[my_pos as usize..];
                    if let Ok(blob) = wrap_layers(&substitute.padded(), keys, &mut self.rng) {
                        let i = index % v.len();
                        v[i] = Onion::new(n - my_pos as usize, blob).expect("width matches depth");
                    }
                }
            },
            _ => {}
        }
        let kind = r.stage_kind(my_pos);
        let bytes = post.to_bytes();
        let r = self.round.as_mut().expect("round active");
        r.my_input = Some(input);
        r.my_post = Some(post);
        self.emit_signed(now, kind, bytes, acts);
    }

    fn check_and_sign(&mut self, now: u64, list: Vec<Destination>, acts: &mut Actions) {
        if !self.set_phase(now, Phase::Checking, acts) {
            return;
        }
        let r = self.round.as_mut().expect("round active");
        r.final_list = Some(list.clone());
        let n = r.n;
        let accuse = matches!(self.cfg.role, Role::Accuser { .. });
        if accuse || !check_destinations(&list, &self.cfg.destination, n) {
            return self.open_blame(now, OPEN_CHECK_FAILED, acts);
        }
        if !self.set_phase(now, Phase::Signing, acts) {
            return;
        }
        if self.cfg.role != Role::NonSigner {
            let r = self.round.as_ref().expect("round active");
            let sig = sign(&r.sig_keys.sk, &r.payout_bytes(&list));
            self.emit_signed(now, MessageKind::SigTag, sig.to_bytes(), acts);
        }
    }

    fn open_blame(&mut self, now: u64, code: u8, acts: &mut Actions) {
        if self.phase == Phase::Blaming || self.round.is_none() {
            return;
        }
        self.emit_signed(now, MessageKind::BlameOpen, vec![code], acts);
    }

    fn enter_blame(&mut self, now: u64, acts: &mut Actions) {
        if !self.phase.in_round() || self.phase == Phase::Blaming {
            return;
        }
        if !self.set_phase(now, Phase::Blaming, acts) {
            return;
        }
        let r = self.round.as_ref().expect("round active");
        let mut claimed_in = r.my_input.clone().or_else(|| r.input());
        if self.cfg.role == (Role::Accuser { liar: true }) {
            if let Some(StageItems::Onions(v)) = claimed_in.as_mut().map(|s| &mut s.items) {
                v.pop();
            }
        }
        let evidence = BlameEvidence {
            position: r.my_pos,
            revealed_sk: self.enc_keys.sk,
            claimed_in,
            claimed_out: r.my_post.clone(),
        };
        let originals: Vec<u8> = [MessageKind::OnionPost, r.stage_kind(r.my_pos)]
            .iter()
            .filter_map(|k| r.log.first(r.my_pos, *k))
            .flat_map(|m| m.to_bytes())
            .collect();
        self.emit_signed(now, MessageKind::BlameEvidence, evidence.to_bytes(), acts);
        if !originals.is_empty() {
            self.emit_signed(now, MessageKind::BlameProof, originals, acts);
        }
    }

    fn round_timers(&mut self, now: u64, ledger: &Ledger, acts: &mut Actions) {
        let t = self.cfg.timeouts.phase;
        let window = self.cfg.timeouts.blame_window;
        let r = self.round.as_mut().expect("round active");
        let idle = now - r.last_progress;
        let n = r.n;
        match self.phase {
            Phase::Announced | Phase::Ordered | Phase::Shuffling if idle >= t => {
                let v = r.log.missing_parties(n);
                self.fail_round(now, v, ledger, acts);
            }
            Phase::Signing => match r.tags_complete_at {
                Some(done) => {
                    let my_turn = done + (n as u64 - r.my_pos as u64) * t;
                    if !r.submitted && now >= my_turn {
                        r.submitted = true;
                        let msg = PayoutMessage {
                            destinations: r.final_list.clone().expect("list known in signing"),
                            signer_pks: r
                                .order
                                .entries()
                                .iter()
                                .map(|e| e.pk_sig.clone())
                                .collect(),
                            sigs: r.tags.clone().expect("tags verified"),
                        };
                        acts.txs.push(Transaction::Payout {
                            escrow: r.escrow,
                            submitter: self.cfg.account,
                            msg,
                        });
                    }
                    if now - done >= (n as u64 + 1) * t {
                        self.withdraw_abort(acts);
                    }
                }
                None if idle >= t => {
                    let v = r.log.missing_parties(n);
                    self.fail_round(now, v, ledger, acts);
                }
                None => {}
            },
            Phase::Blaming => {
                if r.eval_at.is_none() {
                    let evidence = r.log.evidence(n);
                    if evidence.len() == n || idle >= t {
                        r.eval_at = Some(now);
                        let initial = r.log.initial_onions(n).unwrap_or_default();
                        let v = blame_replay(&evidence, &r.log.messages(), &initial, &r.order);
                        if v.pending.is_empty() {
                            self.fail_round(now, v, ledger, acts);
                        } else {
                            r.pending = Some(v);
                        }
                    }
                } else if let (Some(at), Some(pending)) = (r.eval_at, &r.pending) {
                    if now - at >= window {
                        let proofs: Vec<_> = r
                            .log
                            .proofs()
                            .into_iter()
                            .map(|(tick, m)| (tick.saturating_sub(at), m))
                            .collect();
                        let v = blame_resolve_window(pending, &proofs, window, n);
                        self.fail_round(now, v, ledger, acts);
                    }
                }
            }
            _ => {}
        }
    }

    fn fail_round(&mut self, now: u64, verdict: BlameVerdict, ledger: &Ledger, acts: &mut Actions) {
        let r = self.round.take().expect("round active");
        let ejected = verdict.ejected();
        self.verdicts.push(verdict);
        if !self.cfg.role.is_honest() {
            self.phase = Phase::Aborted;
            self.withdraw_due = Some(now + 3 * self.cfg.timeouts.phase);
            return;
        }
        if ejected.contains(&r.my_pos) {
            return self.withdraw_abort(acts);
        }
        let survivors: Vec<AccountId> = r
            .accounts
            .iter()
            .filter(|(p, _)| !ejected.contains(p))
            .map(|(_, a)| *a)
            .collect();
        self.restart(now, r.escrow, r.round, survivors, ledger, acts);
    }

    /// Leaves `old` and joins the escrow every survivor derives from the
    /// same inputs, with a fresh encryption key.
    fn restart(
        &mut self,
        now: u64,
        old: EscrowId,
        round: u64,
        mut survivors: Vec<AccountId>,
        ledger: &Ledger,
        acts: &mut Actions,
    ) {
        survivors.sort();
        let Some(st) = ledger.escrow(&old).filter(|_| survivors.len() >= 2) else {
            return self.withdraw_abort(acts);
        };
        let key = restart_key(&old, round, &survivors);
        let (denomination, gas_fee) = (st.denomination, st.gas_fee);
        acts.txs.push(Transaction::Withdraw {
            escrow: old,
            from: self.cfg.account,
        });
        acts.txs.push(Transaction::Open {
            key,
            denomination,
            k: survivors.len(),
            gas_fee,
        });
        self.enc_keys = keygen(&mut self.rng);
        self.escrow = EscrowId(key);
        self.round = None;
        self.early.clear();
        self.deposit(now, acts);
    }
}

/// Identifier of the escrow that `survivors` of a failed round move to.
pub fn restart_key(old: &EscrowId, round: u64, survivors: &[AccountId]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"tumbler/restart");
    h.update(old.0);
    h.update(round.to_be_bytes());
    for s in survivors {
        h.update(s.0);
    }
    h.finalize().into()
}

#[cfg(test)]
mod tests;
