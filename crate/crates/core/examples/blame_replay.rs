//! A mixer swaps one address; replaying the round with revealed keys names it.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use tumbler::channel::{MessageKind, SignedMessage};
use tumbler::groupcrypto::{derive_sig_keypair, keygen, KeyPair};
use tumbler::onion::{build_onion, order_participants, peel_stage, Destination, StagePost};
use tumbler::participant::{blame_replay, BlameEvidence};

fn main() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let channel_id = [5u8; 32];
    let keys: Vec<KeyPair> = (0..3).map(|_| keygen(&mut rng)).collect();
    let pks: Vec<_> = keys.iter().map(|k| k.pk.clone()).collect();
    let order = order_participants(&pks, &channel_id).unwrap();
    let key_at = |pos: u16| {
        let pk = &order.entry(pos).unwrap().pk_enc;
        keys.iter().find(|k| &k.pk == pk).unwrap().clone()
    };

    let initial: Vec<_> = (1..=3u8)
        .map(|i| build_onion(&Destination([i; 20]), &order, &mut rng).unwrap())
        .collect();
    let mut transcript = Vec::new();
    let mut input = initial.clone();
    for pos in 1..=3u16 {
        let kp = key_at(pos);
        let mut post = peel_stage(&kp.sk, pos, &input, &mut rng).unwrap();
        if pos == 3 {
            // The last mixer replaces the first address with its own.
            let mut list = post.destinations().unwrap().to_vec();
            list[0] = Destination([0xee; 20]);
            post = StagePost::from_bytes(&rewrite(&post, &list), 3).unwrap();
        }
        let kind = if pos == 3 {
            MessageKind::FinalList
        } else {
            MessageKind::StagePost
        };
        let sk = derive_sig_keypair(&channel_id, &kp).sk;
        transcript.push(SignedMessage::new(
            &sk,
            channel_id,
            1,
            pos,
            kind,
            post.to_bytes(),
        ));
        if let Some(next) = post.onions() {
            input = next.to_vec();
        }
    }

    let evidence: Vec<_> = (1..=3u16)
        .map(|p| BlameEvidence {
            position: p,
            revealed_sk: key_at(p).sk,
            claimed_in: None,
            claimed_out: None,
        })
        .collect();
    let verdict = blame_replay(&evidence, &transcript, &initial, &order);
    for (pos, why) in &verdict.reasons {
        println!("position {pos} ejected: {why:?}");
    }
}

fn rewrite(post: &StagePost, list: &[Destination]) -> Vec<u8> {
    let mut bytes = post.to_bytes()[..4].to_vec();
    for d in list {
        bytes.extend_from_slice(&d.0);
    }
    bytes
}
