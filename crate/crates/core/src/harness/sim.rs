//! Discrete-time driver wiring participants, the ledger and the channel.

use std::collections::{BTreeMap, BTreeSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::channel::{Channel, FaultAction, FaultRule, MessageKind, SignedMessage};
use crate::groupcrypto::{keygen, KeyPair};
use crate::ledger::{AccountId, EscrowId, EventKind, Ledger, Phase as EscrowPhase};
use crate::onion::{order_participants, ChainOrder, Destination};
use crate::participant::{
    make_adversary, AdversaryKind, BlameVerdict, Input, Participant, ParticipantConfig, RoundLog,
};

use super::config::{ConfigError, ScenarioConfig};

/// A mixing round as seen from outside: who took part and what a passive
/// observer heard.
#[derive(Clone, Debug)]
pub struct RoundRecord {
    pub escrow: EscrowId,
    pub channel_id: [u8; 32],
    pub round: u64,
    pub order: ChainOrder,
    /// Account at each chain position, position 1 first.
    pub accounts: Vec<AccountId>,
    pub log: RoundLog,
    pub paid_out: bool,
}

struct FaultPlan {
    target: u16,
    liar_index: usize,
    deliver_proof: bool,
}

pub struct Simulation {
    cfg: ScenarioConfig,
    ledger: Ledger,
    channel: Channel,
    parts: Vec<Participant>,
    first_positions: Vec<Option<u16>>,
    funded: BTreeMap<AccountId, u64>,
    rounds: Vec<RoundRecord>,
    fault_plan: Option<FaultPlan>,
    cursor: usize,
    now: u64,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        let mut ledger = Ledger::new(rng.next_u64());
        let escrow = ledger
            .new_escrow(cfg.denomination, cfg.k, cfg.gas_fee)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let channel_id = ledger.escrow(&escrow).expect("just created").channel_id;

        // Keys of the first group are fixed up front so that adversary
        // positions refer to chain positions of the first round.
        let keys: Vec<KeyPair> = (0..cfg.k).map(|_| keygen(&mut rng)).collect();
        let pks: Vec<_> = keys.iter().map(|kp| kp.pk.clone()).collect();
        let order = order_participants(&pks, &channel_id)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let total = cfg.participants();
        let mut first_positions = vec![None; total];
        let mut index_at: BTreeMap<u16, usize> = BTreeMap::new();
        for (i, kp) in keys.iter().enumerate() {
            let p = order.position_of(&kp.pk).expect("key in order");
            first_positions[i] = Some(p);
            index_at.insert(p, i);
        }
        for j in 0..cfg.n_extra_pool {
            index_at.insert((cfg.k + 1 + j) as u16, cfg.k + j);
        }

        let mut configs: Vec<ParticipantConfig> = (0..total)
            .map(|i| {
                let mut account = [0u8; 20];
                let mut dest = [0u8; 20];
                rng.fill_bytes(&mut account);
                rng.fill_bytes(&mut dest);
                let mut pc = ParticipantConfig::honest(
                    AccountId(account),
                    Destination(dest),
                    escrow,
                    rng.next_u64(),
                );
                pc.timeouts = cfg.timeouts;
                pc.restart_policy = cfg.restart_policy;
                pc.enc_keys = keys.get(i).cloned();
                pc
            })
            .collect();
        for (p, phase) in cfg.withdrawal_specs()? {
            configs[index_at[&p]].withdraw_at = Some(phase);
        }

        let mut adversary_at: BTreeMap<usize, (AdversaryKind, u16)> = BTreeMap::new();
        let mut fault_plan = None;
        for spec in cfg.adversary_specs()? {
            for p in &spec.positions {
                adversary_at.insert(index_at[p], (spec.kind.clone(), *p));
            }
            if let AdversaryKind::FalseAccuserPair {
                c,
                target,
                deliver_proof,
                ..
            } = spec.kind
            {
                fault_plan = Some(FaultPlan {
                    target,
                    liar_index: index_at[&c],
                    deliver_proof,
                });
            }
        }
        let mut parts = Vec::with_capacity(total);
        let mut funded = BTreeMap::new();
        for (i, pc) in configs.into_iter().enumerate() {
            ledger.fund(pc.account, cfg.initial_balance());
            funded.insert(pc.account, cfg.initial_balance());
            parts.push(match adversary_at.get(&i) {
                Some((kind, at)) => make_adversary(kind, cfg.k, *at, pc)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?,
                None => Participant::new(pc),
            });
        }
        Ok(Simulation {
            cfg: cfg.clone(),
            ledger,
            channel: Channel::new(rng.next_u64(), cfg.timeouts.max_delay),
            parts,
            first_positions,
            funded,
            rounds: Vec::new(),
            fault_plan,
            cursor: 0,
            now: 0,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    pub fn participants(&self) -> &[Participant] {
        &self.parts
    }

    /// Chain position of each participant in the first round, if it was in
    /// the first group.
    pub fn first_positions(&self) -> &[Option<u16>] {
        &self.first_positions
    }

    pub fn funded(&self) -> &BTreeMap<AccountId, u64> {
        &self.funded
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    fn observer(&self) -> usize {
        self.parts.len()
    }

    pub fn is_settled(&self) -> bool {
        self.parts.iter().all(Participant::is_settled)
    }

    /// Runs until every participant is settled or the tick budget is spent.
    /// Returns whether the run settled.
    pub fn run(&mut self) -> bool {
        while !self.is_settled() {
            if self.now >= self.cfg.tick_budget {
                return false;
            }
            self.step();
        }
        true
    }

    /// One tick: deliveries, ledger news and clock for every participant in
    /// index order, then the ledger applies the submitted transactions.
    pub fn step(&mut self) {
        self.now += 1;
        let now = self.now;
        let observer = self.observer();
        let mut inbox: BTreeMap<usize, Vec<SignedMessage>> = BTreeMap::new();
        for (to, m) in self.channel.tick() {
            inbox.entry(to).or_default().push(m);
        }
        for m in inbox.remove(&observer).unwrap_or_default() {
            if let Some(r) = self
                .rounds
                .iter_mut()
                .find(|r| r.channel_id == m.channel_id && r.round == m.round)
            {
                r.log.push(now, m);
            }
        }
        let events = self.ledger.events()[self.cursor..].to_vec();
        self.cursor += events.len();
        let mut txs = Vec::new();
        for (i, p) in self.parts.iter_mut().enumerate() {
            let mut acts = Vec::new();
            for e in &events {
                acts.push(p.step(now, Input::Ledger(e), &self.ledger));
            }
            for m in inbox.remove(&i).unwrap_or_default() {
                acts.push(p.step(now, Input::Message(&m), &self.ledger));
            }
            acts.push(p.step(now, Input::Tick, &self.ledger));
            for a in acts {
                for m in a.messages {
                    // Unregistered or unverifiable messages are refused by the
                    // channel; the sender's own state already moved on.
                    let _ = self.channel.broadcast(m);
                }
                txs.extend(a.txs);
            }
        }
        for tx in txs {
            // Rejections are recorded in the ledger log.
            let _ = self.ledger.apply(tx);
        }
        for e in &self.ledger.events()[self.cursor..] {
            if e.kind() == EventKind::Payout {
                let round = e.record().round;
                if let Some(r) = self
                    .rounds
                    .iter_mut()
                    .find(|r| r.escrow == e.escrow() && Some(r.round) == round)
                {
                    r.paid_out = true;
                }
            }
        }
        self.register_rounds();
    }

    fn register_rounds(&mut self) {
        let observer = self.observer();
        let fresh: Vec<_> = self
            .ledger
            .escrows()
            .filter(|st| st.phase == EscrowPhase::Mixing)
            .filter(|st| {
                !self
                    .rounds
                    .iter()
                    .any(|r| r.channel_id == st.channel_id && r.round == st.round)
            })
            .cloned()
            .collect();
        for st in fresh {
            let pks: Vec<_> = st.buffer.iter().map(|m| m.pk_enc.clone()).collect();
            let Ok(order) = order_participants(&pks, &st.channel_id) else {
                continue;
            };
            let accounts = order
                .entries()
                .iter()
                .map(|e| {
                    st.buffer
                        .iter()
                        .find(|m| m.pk_enc == e.pk_enc)
                        .expect("order built from buffer")
                        .account
                })
                .collect();
            let members: BTreeSet<AccountId> = st.buffer.iter().map(|m| m.account).collect();
            let mut recipients: Vec<usize> = (0..self.parts.len())
                .filter(|i| members.contains(&self.parts[*i].account()))
                .collect();
            recipients.push(observer);
            if let Some(plan) = self.fault_plan.take() {
                install_faults(&mut self.channel, &plan, st.channel_id, st.k);
            }
            self.channel
                .register(st.channel_id, st.round, order.clone(), recipients);
            self.rounds.push(RoundRecord {
                escrow: st.id,
                channel_id: st.channel_id,
                round: st.round,
                order,
                accounts,
                log: RoundLog::default(),
                paid_out: false,
            });
        }
    }

    /// Rounds that ended without a payout. A round still mixing is not
    /// over yet.
    pub fn failed_rounds(&self) -> impl Iterator<Item = &RoundRecord> {
        self.rounds.iter().filter(|r| {
            let live = self
                .ledger
                .escrow(&r.escrow)
                .is_some_and(|st| st.phase == EscrowPhase::Mixing && st.round == r.round);
            !r.paid_out && !live
        })
    }

    /// Observer verdict for the first failed round.
    pub fn first_failure(&self) -> Option<(&RoundRecord, BlameVerdict)> {
        let r = self.failed_rounds().next()?;
        let t = &self.cfg.timeouts;
        Some((r, r.log.observer_verdict(&r.order, t.phase, t.blame_window)))
    }
}

/// The false-accusation scenario: the target's post reaches only the lying
/// accuser, and optionally its proof never reaches anyone.
fn install_faults(channel: &mut Channel, plan: &FaultPlan, channel_id: [u8; 32], k: usize) {
    let kind = if plan.target as usize == k {
        MessageKind::FinalList
    } else {
        MessageKind::StagePost
    };
    channel.add_fault(FaultRule {
        channel_id: Some(channel_id),
        sender_position: plan.target,
        kind,
        action: FaultAction::DeliverOnlyTo(vec![plan.liar_index]),
    });
    if !plan.deliver_proof {
        channel.add_fault(FaultRule {
            channel_id: Some(channel_id),
            sender_position: plan.target,
            kind: MessageKind::BlameProof,
            action: FaultAction::Drop,
        });
    }
}
