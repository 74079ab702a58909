//! Encryption keys, the signing key derived from them, and hybrid encryption.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use tumbler::groupcrypto::{
    derive_sig_keypair, derive_sig_pk, keygen, pke_decrypt, pke_encrypt, sign, verify, KeyPair,
    CIPHERTEXT_OVERHEAD,
};

fn main() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let channel = [7u8; 32];
    let enc: KeyPair = keygen(&mut rng);
    let sig = derive_sig_keypair(&channel, &enc);

    // Anyone holding the announced key can compute the signing key.
    assert_eq!(derive_sig_pk(&channel, &enc.pk), sig.pk);
    println!("pk_enc {}", hex::encode(enc.pk.to_bytes()));
    println!("pk_sig {}", hex::encode(sig.pk.to_bytes()));

    let s = sign(&sig.sk, b"pay these addresses");
    println!(
        "signature ({} bytes) verifies: {}",
        s.to_bytes().len(),
        verify(&sig.pk, b"pay these addresses", &s)
    );
    println!(
        "under the encryption key: {}",
        verify(&enc.pk, b"pay these addresses", &s)
    );

    let ct = pke_encrypt(&enc.pk, b"a 20-byte address...", &mut rng).unwrap();
    assert_eq!(ct.to_bytes().len(), 20 + CIPHERTEXT_OVERHEAD);
    let pt = pke_decrypt(&enc.sk, &ct).unwrap();
    println!(
        "ciphertext {} bytes, decrypts to {:?}",
        ct.to_bytes().len(),
        String::from_utf8_lossy(&pt)
    );
    let other: KeyPair = keygen(&mut rng);
    println!(
        "foreign key rejected: {}",
        pke_decrypt(&other.sk, &ct).is_err()
    );
}
