//! Builds one onion per member and runs the peel-and-shuffle chain.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use tumbler::groupcrypto::{keygen, KeyPair};
use tumbler::onion::{
    build_onion, check_destinations, order_participants, peel_stage, Destination,
};

fn main() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let channel = [3u8; 32];
    let keys: Vec<KeyPair> = (0..4).map(|_| keygen(&mut rng)).collect();
    let pks: Vec<_> = keys.iter().map(|k| k.pk.clone()).collect();
    let order = order_participants(&pks, &channel).unwrap();
    let sk_at = |pos: u16| {
        let pk = &order.entry(pos).unwrap().pk_enc;
        keys.iter().find(|k| &k.pk == pk).unwrap().sk
    };

    let dests: Vec<Destination> = (1..=4u8).map(|i| Destination([i; 20])).collect();
    let mut onions: Vec<_> = dests
        .iter()
        .map(|d| build_onion(d, &order, &mut rng).unwrap())
        .collect();
    println!("onion width {} bytes", onions[0].blob().len());

    let mut finals = Vec::new();
    for pos in 1..=order.len() as u16 {
        let post = peel_stage(&sk_at(pos), pos, &onions, &mut rng).unwrap();
        println!("stage {pos}: {} bytes", post.to_bytes().len());
        match post.onions() {
            Some(next) => onions = next.to_vec(),
            None => finals = post.destinations().unwrap().to_vec(),
        }
    }
    for d in &finals {
        println!("  {}", hex::encode(d.0));
    }
    assert!(dests.iter().all(|d| check_destinations(&finals, d, 4)));
}
