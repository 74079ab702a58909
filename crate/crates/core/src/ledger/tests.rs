use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::groupcrypto::{derive_sig_keypair, keygen, sign, KeyPair};

fn acct(i: u8) -> AccountId {
    AccountId([i; 20])
}

fn dest(i: u8) -> Destination {
    Destination([0x80 | i; 20])
}

struct Fixture {
    ledger: Ledger,
    escrow: EscrowId,
    keys: Vec<KeyPair>,
}

/// Ledger with `k` funded depositors already in the buffer.
fn mixing(k: usize, denom: u64, gas: u64) -> Fixture {
    let mut rng = ChaCha20Rng::seed_from_u64(k as u64);
    let mut ledger = Ledger::new(1);
    let escrow = ledger.new_escrow(denom, k, gas).unwrap();
    let mut keys = Vec::new();
    for i in 0..k {
        let kp: KeyPair = keygen(&mut rng);
        ledger.fund(acct(i as u8), 1_000);
        let out = ledger
            .apply(Transaction::Deposit {
                escrow,
                from: acct(i as u8),
                pk_enc: kp.pk.clone(),
            })
            .unwrap();
        assert_eq!(out, TxOutcome::Deposited(Placement::Buffer(i + 1)));
        keys.push(kp);
    }
    Fixture {
        ledger,
        escrow,
        keys,
    }
}

fn honest_payout(f: &Fixture) -> PayoutMessage {
    let st = f.ledger.escrow(&f.escrow).unwrap();
    let destinations: Vec<_> = (0..st.k).map(|i| dest(i as u8)).collect();
    let bytes = payout_message_bytes(&destinations, &f.escrow, st.round);
    let sig_keys: Vec<_> = f
        .keys
        .iter()
        .map(|kp| derive_sig_keypair(&st.channel_id, kp))
        .collect();
    PayoutMessage {
        signer_pks: sig_keys.iter().map(|kp| kp.pk.clone()).collect(),
        sigs: sig_keys.iter().map(|kp| sign(&kp.sk, &bytes)).collect(),
        destinations,
    }
}

#[test]
fn new_escrow_params() {
    let mut l = Ledger::new(0);
    let id = l.new_escrow(100, 5, 0).unwrap();
    let st = l.escrow(&id).unwrap();
    assert_eq!((st.phase, st.escrow_balance), (Phase::Filling, 0));
    assert_eq!(l.new_escrow(100, 1, 0), Err(LedgerError::InvalidParams));
    assert_eq!(l.new_escrow(0, 5, 0), Err(LedgerError::InvalidParams));
}

#[test]
fn open_is_idempotent_per_key() {
    let mut l = Ledger::new(0);
    let open = Transaction::Open {
        key: [9; 32],
        denomination: 10,
        k: 2,
        gas_fee: 0,
    };
    let a = l.apply(open.clone()).unwrap();
    let b = l.apply(open).unwrap();
    assert_eq!(a, b);
    assert_eq!(l.escrows().count(), 1);
}

#[test]
fn deposits_fill_buffer_then_pool() {
    let mut f = mixing(2, 100, 0);
    assert_eq!(f.ledger.escrow(&f.escrow).unwrap().phase, Phase::Mixing);
    f.ledger.fund(acct(7), 500);
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let kp: KeyPair = keygen(&mut rng);
    let out = f
        .ledger
        .apply(Transaction::Deposit {
            escrow: f.escrow,
            from: acct(7),
            pk_enc: kp.pk,
        })
        .unwrap();
    assert_eq!(out, TxOutcome::Deposited(Placement::Pool(1)));
    assert_eq!(f.ledger.escrow(&f.escrow).unwrap().phase, Phase::Mixing);
}

#[test]
fn deposit_errors_leave_state_alone() {
    let mut l = Ledger::new(0);
    let escrow = l.new_escrow(100, 3, 5).unwrap();
    l.fund(acct(1), 104);
    let pk = GroupElement::generator();
    let before = l.escrow(&escrow).cloned();
    let err = l.apply(Transaction::Deposit {
        escrow,
        from: acct(1),
        pk_enc: pk.clone(),
    });
    assert_eq!(err, Err(LedgerError::InsufficientFunds));
    assert_eq!(l.escrow(&escrow).cloned(), before);
    assert_eq!(l.balance(&acct(1)), 104);
    l.fund(acct(1), 1);
    l.apply(Transaction::Deposit {
        escrow,
        from: acct(1),
        pk_enc: pk.clone(),
    })
    .unwrap();
    assert_eq!(l.balance(&acct(1)), 0);
    l.fund(acct(1), 500);
    let err = l.apply(Transaction::Deposit {
        escrow,
        from: acct(1),
        pk_enc: pk,
    });
    assert_eq!(err, Err(LedgerError::AlreadyDeposited));
    assert_eq!(l.events().last().unwrap().kind(), EventKind::Reject);
}

#[test]
fn deposit_then_withdraw_costs_gas() {
    let mut l = Ledger::new(0);
    let escrow = l.new_escrow(100, 3, 7).unwrap();
    l.fund(acct(1), 1_000);
    l.apply(Transaction::Deposit {
        escrow,
        from: acct(1),
        pk_enc: GroupElement::generator(),
    })
    .unwrap();
    assert_eq!(
        l.apply(Transaction::Withdraw {
            escrow,
            from: acct(1)
        }),
        Ok(TxOutcome::Withdrawn(100))
    );
    assert_eq!(l.balance(&acct(1)), 1_000 - 7);
    assert!(l.is_conserved());
    assert_eq!(
        l.apply(Transaction::Withdraw {
            escrow,
            from: acct(1)
        }),
        Err(LedgerError::NotADepositor)
    );
}

#[test]
fn buffer_withdrawal_promotes_pool_head() {
    let mut f = mixing(3, 10, 1);
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    for i in 10..12u8 {
        f.ledger.fund(acct(i), 100);
        let kp: KeyPair = keygen(&mut rng);
        f.ledger
            .apply(Transaction::Deposit {
                escrow: f.escrow,
                from: acct(i),
                pk_enc: kp.pk,
            })
            .unwrap();
    }
    let round = f.ledger.escrow(&f.escrow).unwrap().round;
    f.ledger
        .apply(Transaction::Withdraw {
            escrow: f.escrow,
            from: acct(1),
        })
        .unwrap();
    let st = f.ledger.escrow(&f.escrow).unwrap();
    st.check_invariants().unwrap();
    assert_eq!(st.phase, Phase::Mixing);
    assert_eq!(st.round, round + 1);
    assert_eq!(
        st.buffer.iter().map(|m| m.account).collect::<Vec<_>>(),
        vec![acct(0), acct(2), acct(10)]
    );
    assert_eq!(
        st.pool.iter().map(|m| m.account).collect::<Vec<_>>(),
        vec![acct(11)]
    );
    assert!(f.ledger.is_conserved());
}

#[test]
fn buffer_withdrawal_without_pool_reverts_to_filling() {
    let mut f = mixing(3, 10, 0);
    f.ledger
        .apply(Transaction::Withdraw {
            escrow: f.escrow,
            from: acct(0),
        })
        .unwrap();
    let st = f.ledger.escrow(&f.escrow).unwrap();
    assert_eq!(st.phase, Phase::Filling);
    st.check_invariants().unwrap();
}

#[test]
fn honest_payout_credits_each_destination() {
    let mut f = mixing(3, 100, 2);
    let msg = honest_payout(&f);
    let out = f
        .ledger
        .apply(Transaction::Payout {
            escrow: f.escrow,
            submitter: acct(0),
            msg,
        })
        .unwrap();
    let TxOutcome::PaidOut(receipt) = out else {
        panic!("expected payout")
    };
    assert_eq!(receipt.payers, vec![acct(0), acct(1), acct(2)]);
    for i in 0..3 {
        assert_eq!(f.ledger.balance(&AccountId::from(dest(i))), 100);
    }
    let st = f.ledger.escrow(&f.escrow).unwrap();
    assert_eq!(
        (st.phase, st.escrow_balance, st.buffer.len()),
        (Phase::Filling, 0, 0)
    );
    assert!(f.ledger.is_conserved());
}

#[test]
fn any_account_may_submit() {
    let mut f = mixing(2, 100, 0);
    let msg = honest_payout(&f);
    assert!(f
        .ledger
        .apply(Transaction::Payout {
            escrow: f.escrow,
            submitter: acct(99),
            msg
        })
        .is_ok());
}

fn rejected(f: &mut Fixture, msg: PayoutMessage) -> RejectReason {
    let before = (
        f.ledger.escrow(&f.escrow).cloned(),
        f.ledger.accounts().clone(),
    );
    let n_events = f.ledger.events().len();
    let err = f
        .ledger
        .apply(Transaction::Payout {
            escrow: f.escrow,
            submitter: acct(0),
            msg,
        })
        .unwrap_err();
    assert_eq!(
        (
            f.ledger.escrow(&f.escrow).cloned(),
            f.ledger.accounts().clone()
        ),
        before
    );
    assert_eq!(f.ledger.events().len(), n_events + 1);
    assert_eq!(f.ledger.events().last().unwrap().kind(), EventKind::Reject);
    match err {
        LedgerError::Rejected(r) => r,
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn payout_rejections_for_every_k() {
    for k in [2usize, 3, 5] {
        let mut f = mixing(k, 100, 1);
        let good = honest_payout(&f);

        let mut m = good.clone();
        m.sigs.pop();
        assert_eq!(rejected(&mut f, m), RejectReason::CountMismatch);

        let mut m = good.clone();
        m.signer_pks[k - 1] = m.signer_pks[0].clone();
        m.sigs[k - 1] = m.sigs[0].clone();
        assert_eq!(rejected(&mut f, m), RejectReason::DuplicateSigner(k - 1));

        let mut m = good.clone();
        m.sigs.swap(0, 1);
        assert_eq!(rejected(&mut f, m), RejectReason::BadSignature(0));

        let mut rng = ChaCha20Rng::seed_from_u64(77);
        let stranger: KeyPair = keygen(&mut rng);
        let st = f.ledger.escrow(&f.escrow).unwrap();
        let bytes = payout_message_bytes(&good.destinations, &f.escrow, st.round);
        let idx = k / 2;
        let mut m = good.clone();
        m.signer_pks[idx] = stranger.pk.clone();
        m.sigs[idx] = sign(&stranger.sk, &bytes);
        assert_eq!(rejected(&mut f, m), RejectReason::UnknownSigner(idx));

        assert!(f
            .ledger
            .apply(Transaction::Payout {
                escrow: f.escrow,
                submitter: acct(0),
                msg: good
            })
            .is_ok());
    }
}

#[test]
fn signatures_do_not_replay_across_rounds() {
    let mut f = mixing(2, 100, 0);
    let old = honest_payout(&f);
    f.ledger
        .apply(Transaction::Withdraw {
            escrow: f.escrow,
            from: acct(1),
        })
        .unwrap();
    f.ledger.fund(acct(1), 0);
    f.ledger
        .apply(Transaction::Deposit {
            escrow: f.escrow,
            from: acct(1),
            pk_enc: f.keys[1].pk.clone(),
        })
        .unwrap();
    assert_eq!(rejected(&mut f, old), RejectReason::BadSignature(0));
}

#[test]
fn payout_outside_mixing_is_wrong_phase() {
    let mut f = mixing(2, 100, 0);
    let msg = honest_payout(&f);
    f.ledger
        .apply(Transaction::Withdraw {
            escrow: f.escrow,
            from: acct(0),
        })
        .unwrap();
    assert_eq!(rejected(&mut f, msg), RejectReason::WrongPhase);
}

#[test]
fn flush_examples() {
    let mk = |pool: usize| {
        let mut st = EscrowState::new(EscrowId([0; 32]), [0; 32], 1, 2, 0).unwrap();
        for i in 0..pool {
            st.pool.push_back(Member {
                account: acct(i as u8),
                pk_enc: GroupElement::generator(),
            });
            st.escrow_balance += 1;
        }
        st
    };
    let mut st = mk(2);
    assert_eq!(st.flush(), 2);
    assert_eq!(
        (st.buffer.len(), st.pool.len(), st.phase),
        (2, 0, Phase::Mixing)
    );
    assert_eq!(st.buffer[0].account, acct(0));
    let mut st = mk(1);
    assert_eq!(st.flush(), 1);
    assert_eq!(st.phase, Phase::Filling);
    let mut st = mk(0);
    assert_eq!(st.flush(), 0);
    assert_eq!((st.buffer.len(), st.phase), (0, Phase::Filling));
}

#[test]
fn payout_with_pool_refills_buffer() {
    let mut f = mixing(2, 100, 0);
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    for i in 20..23u8 {
        f.ledger.fund(acct(i), 100);
        let kp: KeyPair = keygen(&mut rng);
        f.ledger
            .apply(Transaction::Deposit {
                escrow: f.escrow,
                from: acct(i),
                pk_enc: kp.pk,
            })
            .unwrap();
    }
    let msg = honest_payout(&f);
    let TxOutcome::PaidOut(r) = f
        .ledger
        .apply(Transaction::Payout {
            escrow: f.escrow,
            submitter: acct(0),
            msg,
        })
        .unwrap()
    else {
        panic!()
    };
    assert_eq!(r.promoted, 2);
    let st = f.ledger.escrow(&f.escrow).unwrap();
    assert_eq!((st.phase, st.round, st.pool.len()), (Phase::Mixing, 2, 1));
    st.check_invariants().unwrap();
}

#[test]
fn jsonl_replay_matches_balances() {
    let mut f = mixing(3, 100, 4);
    let msg = honest_payout(&f);
    f.ledger
        .apply(Transaction::Payout {
            escrow: f.escrow,
            submitter: acct(2),
            msg,
        })
        .unwrap();
    let records: Vec<EventRecord> = f
        .ledger
        .export_jsonl()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let (deltas, gas) = replay_deltas(&records).unwrap();
    assert_eq!(gas, 12);
    assert_eq!(deltas[&acct(0).to_string()], -104);
    assert_eq!(deltas[&AccountId::from(dest(1)).to_string()], 100);
    assert_eq!(deltas.values().sum::<i128>() + gas as i128, 0);
    let first = records
        .iter()
        .find(|r| r.kind == Some(EventKind::Deposit))
        .unwrap();
    let line = serde_json::to_string(first).unwrap();
    for key in ["\"seq\"", "\"kind\"", "\"from\"", "\"amount\""] {
        assert!(line.contains(key), "{line}");
    }
}

#[derive(Clone, Debug)]
enum Op {
    Deposit(u8),
    Withdraw(u8),
    Payout,
    BadPayout,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0u8..6).prop_map(Op::Deposit),
        2 => (0u8..6).prop_map(Op::Withdraw),
        1 => Just(Op::Payout),
        1 => Just(Op::BadPayout),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conservation_and_invariants_hold(ops in prop::collection::vec(op(), 1..40), gas in 0u64..5) {
        let mut rng = ChaCha20Rng::seed_from_u64(gas);
        let mut ledger = Ledger::new(gas);
        let escrow = ledger.new_escrow(50, 3, gas).unwrap();
        let keys: Vec<KeyPair> = (0..6).map(|_| keygen(&mut rng)).collect();
        for i in 0..6 {
            ledger.fund(acct(i), 400);
        }
        for o in ops {
            let st = ledger.escrow(&escrow).unwrap().clone();
            let tx = match o {
                Op::Deposit(i) => Transaction::Deposit { escrow, from: acct(i), pk_enc: keys[i as usize].pk.clone() },
                Op::Withdraw(i) => Transaction::Withdraw { escrow, from: acct(i) },
                Op::Payout | Op::BadPayout => {
                    let dests: Vec<_> = (0..st.k).map(|i| dest(i as u8)).collect();
                    let bytes = payout_message_bytes(&dests, &escrow, st.round);
                    let mut sk = Vec::new();
                    for m in &st.buffer {
                        let idx = keys.iter().position(|k| k.pk == m.pk_enc).unwrap();
                        sk.push(derive_sig_keypair(&st.channel_id, &keys[idx]));
                    }
                    let mut msg = PayoutMessage {
                        signer_pks: sk.iter().map(|k| k.pk.clone()).collect(),
                        sigs: sk.iter().map(|k| sign(&k.sk, &bytes)).collect(),
                        destinations: dests,
                    };
                    if matches!(o, Op::BadPayout) && !msg.sigs.is_empty() {
                        msg.sigs.rotate_left(1);
                    }
                    Transaction::Payout { escrow, submitter: acct(0), msg }
                }
            };
            let accounts_before = ledger.accounts().clone();
            let res = ledger.apply(tx);
            if res.is_err() {
                prop_assert_eq!(ledger.escrow(&escrow).unwrap(), &st);
                prop_assert_eq!(ledger.accounts(), &accounts_before);
            }
            let now = ledger.escrow(&escrow).unwrap();
            prop_assert!(now.check_invariants().is_ok(), "{:?}", now.check_invariants());
            prop_assert!(ledger.is_conserved());
        }
    }

    #[test]
    fn deposit_consumed_once(withdraw_first in any::<bool>(), who in 0usize..3) {
        let mut f = mixing(3, 100, 1);
        let msg = honest_payout(&f);
        let w = Transaction::Withdraw { escrow: f.escrow, from: acct(who as u8) };
        let p = Transaction::Payout { escrow: f.escrow, submitter: acct(0), msg };
        let (a, b) = if withdraw_first { (w, p) } else { (p, w) };
        prop_assert!(f.ledger.apply(a).is_ok());
        prop_assert!(f.ledger.apply(b).is_err());
        prop_assert!(f.ledger.is_conserved());
        let total_out: u64 = (0..3).map(|i| f.ledger.balance(&AccountId::from(dest(i)))).sum();
        let refunded = f.ledger.balance(&acct(who as u8)) == 1_000 - 1;
        prop_assert_eq!(total_out == 300, !refunded);
    }
}
