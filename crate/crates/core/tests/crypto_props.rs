use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use tumbler::groupcrypto::{
    derive_sig_keypair, derive_sig_pk, keygen, pke_decrypt, pke_encrypt, sign, verify, Ciphertext,
    GroupElement, KeyPair, Scalar, Signature, CIPHERTEXT_OVERHEAD,
};

fn keys(seed: u64) -> (KeyPair, ChaCha20Rng) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (keygen(&mut rng), rng)
}

/// r recomputed from the definition with nothing but SHA-256.
fn offset_oracle(channel: &[u8], pk: &GroupElement) -> Scalar {
    let digest: [u8; 32] = Sha256::new()
        .chain_update(b"tumbler/r")
        .chain_update(channel)
        .chain_update(pk.to_bytes())
        .finalize()
        .into();
    Scalar::reduce(&digest)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn pke_roundtrip(seed: u64, msg in proptest::collection::vec(any::<u8>(), 0..160)) {
        let (kp, mut rng) = keys(seed);
        let ct = pke_encrypt(&kp.pk, &msg, &mut rng).unwrap();
        let bytes = ct.to_bytes();
        prop_assert_eq!(bytes.len(), msg.len() + CIPHERTEXT_OVERHEAD);
        let back = Ciphertext::from_bytes(&bytes).unwrap();
        prop_assert_eq!(pke_decrypt(&kp.sk, &back).unwrap(), msg);
    }

    #[test]
    fn pke_rejects_foreign_key(seed: u64, msg in proptest::collection::vec(any::<u8>(), 0..64)) {
        let (kp, mut rng) = keys(seed);
        let other: KeyPair = keygen(&mut rng);
        let ct = pke_encrypt(&kp.pk, &msg, &mut rng).unwrap();
        prop_assert!(pke_decrypt(&other.sk, &ct).is_err());
    }

    #[test]
    fn signature_roundtrip(seed: u64, msg in proptest::collection::vec(any::<u8>(), 0..128), flip in 0usize..65) {
        let (kp, mut rng) = keys(seed);
        let sig = sign(&kp.sk, &msg);
        let bytes = sig.to_bytes();
        prop_assert_eq!(bytes.len(), 65);
        prop_assert!(verify(&kp.pk, &msg, &Signature::from_bytes(&bytes).unwrap()));
        let other: KeyPair = keygen(&mut rng);
        prop_assert!(!verify(&other.pk, &msg, &sig));
        let mut longer = msg.clone();
        longer.push(0);
        prop_assert!(!verify(&kp.pk, &longer, &sig));
        let mut bad = bytes.clone();
        bad[flip] ^= 1;
        if let Some(s) = Signature::from_bytes(&bad) {
            prop_assert!(!verify(&kp.pk, &msg, &s));
        }
    }

    #[test]
    fn derived_key_equation(seed: u64, channel in proptest::collection::vec(any::<u8>(), 32)) {
        let (kp, _) = keys(seed);
        let r = offset_oracle(&channel, &kp.pk);
        let expected = kp.pk.mul(&GroupElement::base_pow(&r));
        prop_assert_eq!(derive_sig_pk(&channel, &kp.pk), expected.clone());
        let sig_keys = derive_sig_keypair(&channel, &kp);
        prop_assert_eq!(GroupElement::base_pow(&sig_keys.sk), expected);
    }
}
