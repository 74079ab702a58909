use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use tumbler::groupcrypto::{keygen, KeyPair};
use tumbler::onion::{build_onion, order_participants, peel_stage, Destination, StageItems};

/// Runs the whole chain with honest peelers and returns (inputs, final list).
fn pipeline(k: usize, seed: u64) -> (Vec<Destination>, Vec<Destination>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let keys: Vec<KeyPair> = (0..k).map(|_| keygen(&mut rng)).collect();
    let pks: Vec<_> = keys.iter().map(|kp| kp.pk.clone()).collect();
    let order = order_participants(&pks, &[7u8; 32]).unwrap();
    let dests: Vec<Destination> = (0..k).map(|_| Destination(rng.gen())).collect();
    let mut onions: Vec<_> = dests
        .iter()
        .map(|d| build_onion(d, &order, &mut rng).unwrap())
        .collect();
    for entry in order.entries() {
        let kp = keys.iter().find(|kp| kp.pk == entry.pk_enc).unwrap();
        let post = peel_stage(&kp.sk, entry.position, &onions, &mut rng).unwrap();
        assert!(post.is_well_formed(k));
        match post.items {
            StageItems::Onions(next) => onions = next,
            StageItems::Destinations(list) => return (dests, list),
        }
    }
    unreachable!("last position yields destinations")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn final_list_is_input_multiset(k in 2usize..=8, seed: u64) {
        let (mut input, mut output) = pipeline(k, seed);
        input.sort();
        output.sort();
        prop_assert_eq!(input, output);
    }
}

/// Chi-square over the 3! output orders of one stage; 5 degrees of freedom,
/// 20.52 is the 0.001 critical value.
#[test]
fn stage_shuffle_is_uniform() {
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let keys: Vec<KeyPair> = (0..3).map(|_| keygen(&mut rng)).collect();
    let pks: Vec<_> = keys.iter().map(|kp| kp.pk.clone()).collect();
    let order = order_participants(&pks, &[1u8; 32]).unwrap();
    let last = order.entries().last().unwrap();
    let sk = keys.iter().find(|kp| kp.pk == last.pk_enc).unwrap().sk;
    // Onions wrapped only for the last position peel straight to addresses.
    let dests = [
        Destination([1; 20]),
        Destination([2; 20]),
        Destination([3; 20]),
    ];
    let keys_tail = vec![last.pk_enc.clone()];
    let onions: Vec<_> = dests
        .iter()
        .map(|d| {
            let blob = tumbler::onion::wrap_layers(&d.padded(), &keys_tail, &mut rng).unwrap();
            tumbler::onion::Onion::new(1, blob).unwrap()
        })
        .collect();
    let trials = 6000;
    let mut counts: BTreeMap<Vec<u8>, u32> = BTreeMap::new();
    for _ in 0..trials {
        let post = peel_stage(&sk, 3, &onions, &mut rng).unwrap();
        let order: Vec<u8> = post
            .destinations()
            .unwrap()
            .iter()
            .map(|d| d.0[0])
            .collect();
        *counts.entry(order).or_default() += 1;
    }
    assert_eq!(counts.len(), 6);
    let expected = trials as f64 / 6.0;
    let chi: f64 = counts
        .values()
        .map(|c| (*c as f64 - expected).powi(2) / expected)
        .sum();
    assert!(chi < 20.52, "chi-square {chi} over {counts:?}");
}
