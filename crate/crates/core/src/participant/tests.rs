use std::collections::BTreeMap;

use super::*;
use crate::channel::Channel;

struct Net {
    ledger: Ledger,
    channel: Channel,
    parts: Vec<Participant>,
    cursor: usize,
    registered: BTreeSet<([u8; 32], u64)>,
    now: u64,
}

impl Net {
    fn new(k: usize, roles: &[(usize, Role)], seed: u64) -> Self {
        let mut ledger = Ledger::new(seed);
        let escrow = ledger.new_escrow(100, k, 1).unwrap();
        let parts = (0..k)
            .map(|i| {
                let account = AccountId([i as u8 + 1; 20]);
                ledger.fund(account, 1_000);
                let mut cfg = ParticipantConfig::honest(
                    account,
                    Destination([0x40 + i as u8; 20]),
                    escrow,
                    seed + i as u64,
                );
                if let Some((_, role)) = roles.iter().find(|(j, _)| *j == i) {
                    cfg.role = role.clone();
                }
                Participant::new(cfg)
            })
            .collect();
        Net {
            ledger,
            channel: Channel::new(seed, 2),
            parts,
            cursor: 0,
            registered: BTreeSet::new(),
            now: 0,
        }
    }

    fn tick(&mut self) {
        self.now += 1;
        let mut inbox: BTreeMap<usize, Vec<SignedMessage>> = BTreeMap::new();
        for (to, m) in self.channel.tick() {
            inbox.entry(to).or_default().push(m);
        }
        let events = self.ledger.events()[self.cursor..].to_vec();
        self.cursor += events.len();
        let mut txs = Vec::new();
        for (i, p) in self.parts.iter_mut().enumerate() {
            let mut acts = Vec::new();
            for e in &events {
                acts.push(p.step(self.now, Input::Ledger(e), &self.ledger));
            }
            for m in inbox.remove(&i).unwrap_or_default() {
                acts.push(p.step(self.now, Input::Message(&m), &self.ledger));
            }
            acts.push(p.step(self.now, Input::Tick, &self.ledger));
            for a in acts {
                for m in a.messages {
                    let _ = self.channel.broadcast(m);
                }
                txs.extend(a.txs);
            }
        }
        for tx in txs {
            let _ = self.ledger.apply(tx);
        }
        let live: Vec<EscrowState> = self
            .ledger
            .escrows()
            .filter(|e| e.phase == EscrowPhase::Mixing)
            .cloned()
            .collect();
        for st in live {
            if self.registered.insert((st.channel_id, st.round)) {
                let pks: Vec<_> = st.buffer.iter().map(|m| m.pk_enc.clone()).collect();
                let order = order_participants(&pks, &st.channel_id).unwrap();
                let recipients = (0..self.parts.len())
                    .filter(|i| st.in_buffer(&self.parts[*i].account()))
                    .collect();
                self.channel
                    .register(st.channel_id, st.round, order, recipients);
            }
        }
    }

    fn run(&mut self) {
        while self.now < 2_000 && !self.parts.iter().all(Participant::is_settled) {
            self.tick();
        }
    }
}

#[test]
fn honest_group_reaches_done() {
    for k in [2, 3, 5] {
        let mut net = Net::new(k, &[], 11);
        net.run();
        assert!(net.parts.iter().all(|p| p.phase() == Phase::Done), "k={k}");
        let payouts = net
            .ledger
            .events()
            .iter()
            .filter(|e| e.kind() == EventKind::Payout)
            .count();
        assert_eq!(payouts, 1);
        for p in &net.parts {
            assert_eq!(net.ledger.balance(&AccountId::from(p.destination())), 100);
            assert_eq!(p.deposits(), 1);
        }
        assert!(net.ledger.is_conserved());
    }
}

#[test]
fn non_signer_forces_restart_without_it() {
    let mut net = Net::new(4, &[(2, Role::NonSigner)], 5);
    net.run();
    for (i, p) in net.parts.iter().enumerate() {
        if i == 2 {
            assert_eq!(p.phase(), Phase::Aborted);
        } else {
            assert_eq!(p.phase(), Phase::Done, "participant {i}");
            assert_eq!(p.deposits(), 2);
        }
    }
    assert!(net.ledger.is_conserved());
}

#[test]
fn scripted_withdraw_aborts_cleanly() {
    for phase in [
        Phase::Deposited,
        Phase::Announced,
        Phase::Shuffling,
        Phase::Signing,
    ] {
        let mut net = Net::new(3, &[], 9);
        net.parts[0].cfg.withdraw_at = Some(phase);
        net.run();
        assert_eq!(net.parts[0].phase(), Phase::Aborted, "{phase:?}");
        assert!(net.ledger.is_conserved());
        let escrowed: u64 = net.ledger.escrows().map(|e| e.escrow_balance).sum();
        assert_eq!(escrowed, 0, "{phase:?}");
    }
}

#[test]
fn restart_key_depends_on_survivors() {
    let e = EscrowId([3; 32]);
    let a = [AccountId([1; 20]), AccountId([2; 20])];
    assert_ne!(restart_key(&e, 1, &a), restart_key(&e, 1, &a[..1]));
    assert_ne!(restart_key(&e, 1, &a), restart_key(&e, 2, &a));
    assert_eq!(restart_key(&e, 1, &a), restart_key(&e, 1, &a));
}
