//! Deposits, a withdrawal and a jointly signed payout against the toy ledger.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use tumbler::groupcrypto::{derive_sig_keypair, keygen, sign, KeyPair};
use tumbler::ledger::{
    payout_message_bytes, AccountId, Ledger, PayoutMessage, Transaction, TxOutcome,
};
use tumbler::onion::Destination;

fn main() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let mut ledger = Ledger::new(3);
    let escrow = ledger.new_escrow(100, 3, 1).unwrap();
    let channel = ledger.escrow(&escrow).unwrap().channel_id;

    let accounts: Vec<AccountId> = (1..=4u8).map(|i| AccountId([i; 20])).collect();
    let keys: Vec<KeyPair> = accounts.iter().map(|_| keygen(&mut rng)).collect();
    for (a, k) in accounts.iter().zip(&keys) {
        ledger.fund(*a, 500);
        let r = ledger.apply(Transaction::Deposit {
            escrow,
            from: *a,
            pk_enc: k.pk.clone(),
        });
        println!("deposit from {}: {r:?}", &a.to_string()[..8]);
    }
    // The first depositor leaves; the pool head takes its seat.
    let r = ledger.apply(Transaction::Withdraw {
        escrow,
        from: accounts[0],
    });
    println!("withdraw: {r:?}");

    let st = ledger.escrow(&escrow).unwrap();
    let dests: Vec<Destination> = (0..3u8).map(|i| Destination([0xd0 + i; 20])).collect();
    let bytes = payout_message_bytes(&dests, &escrow, st.round);
    let (mut signer_pks, mut sigs) = (Vec::new(), Vec::new());
    for k in &keys[1..] {
        let sk = derive_sig_keypair(&channel, k);
        sigs.push(sign(&sk.sk, &bytes));
        signer_pks.push(sk.pk);
    }
    let msg = PayoutMessage {
        destinations: dests,
        signer_pks,
        sigs,
    };
    let r = ledger
        .apply(Transaction::Payout {
            escrow,
            submitter: accounts[1],
            msg,
        })
        .unwrap();
    if let TxOutcome::PaidOut(receipt) = r {
        println!(
            "round {} paid {} addresses",
            receipt.round,
            receipt.credits.len()
        );
    }

    for a in &accounts {
        println!("{} holds {}", &a.to_string()[..8], ledger.balance(a));
    }
    println!(
        "gas collected {}, conserved {}",
        ledger.gas_collected(),
        ledger.is_conserved()
    );
}
