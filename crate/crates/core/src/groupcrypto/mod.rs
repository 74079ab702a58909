//! Group cryptography: keys, hashing to scalars, the channel-bound signing
//! key derivation, hybrid public-key encryption and Schnorr signatures.
//!
//! All functions are pure in their inputs plus an explicitly passed random
//! source.

mod group;
mod pke;
mod schnorr;
mod secp256k1;
mod toy;

use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use group::{GroupElement, PrimeGroup, Scalar, SCALAR_LEN};
pub use pke::{pke_decrypt, pke_encrypt, Ciphertext, CIPHERTEXT_OVERHEAD, MAX_PAYLOAD, TAG_LEN};
pub use schnorr::{sign, verify, Signature};
pub use secp256k1::Secp256k1;
pub use toy::{ToyGroup, TOY_G, TOY_P, TOY_Q};

/// Label for the signing-key offset `r`; also the default for [`hash_to_scalar`].
pub const LABEL_R: &[u8] = b"tumbler/r";
pub const LABEL_CHALLENGE: &[u8] = b"tumbler/chal";
pub const LABEL_KDF: &[u8] = b"tumbler/kdf";
pub const LABEL_NONCE: &[u8] = b"tumbler/nonce";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("payload of {len} bytes exceeds the {max}-byte maximum")]
    PayloadTooLong { len: usize, max: usize },
    #[error("integrity check failed")]
    IntegrityFailure,
    #[error("malformed encoding: {0}")]
    Malformed(&'static str),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyPair<G: PrimeGroup = Secp256k1> {
    pub sk: Scalar<G>,
    pub pk: GroupElement<G>,
}

impl<G: PrimeGroup> KeyPair<G> {
    pub fn from_secret(sk: Scalar<G>) -> Self {
        let pk = GroupElement::base_pow(&sk);
        KeyPair { sk, pk }
    }
}

pub fn keygen<G: PrimeGroup, R: RngCore + CryptoRng>(rng: &mut R) -> KeyPair<G> {
    KeyPair::from_secret(Scalar::random_nonzero(rng))
}

/// SHA-256 over `label || parts...`, read big-endian and reduced mod `q`.
pub fn hash_to_scalar_labeled<G: PrimeGroup>(label: &[u8], parts: &[&[u8]]) -> Scalar<G> {
    let mut h = Sha256::new();
    h.update(label);
    for p in parts {
        h.update(p);
    }
    Scalar::reduce(&h.finalize().into())
}

pub fn hash_to_scalar<G: PrimeGroup>(data: &[u8]) -> Scalar<G> {
    hash_to_scalar_labeled(LABEL_R, &[data])
}

/// `r = H(channel_id || pk_enc)`.
pub fn sig_offset<G: PrimeGroup>(channel_id: &[u8], pk_enc: &GroupElement<G>) -> Scalar<G> {
    hash_to_scalar_labeled(LABEL_R, &[channel_id, &pk_enc.to_bytes()])
}

/// Public half of the derivation: anyone holding the channel id and the
/// announced encryption key computes `pk_sig = pk_enc * g^r`.
pub fn derive_sig_pk<G: PrimeGroup>(
    channel_id: &[u8],
    pk_enc: &GroupElement<G>,
) -> GroupElement<G> {
    let r = sig_offset(channel_id, pk_enc);
    pk_enc.mul(&GroupElement::base_pow(&r))
}

/// Signing key pair bound to a channel: `sk = x + r`, `pk = g^x * g^r`.
pub fn derive_sig_keypair<G: PrimeGroup>(channel_id: &[u8], enc_keys: &KeyPair<G>) -> KeyPair<G> {
    let r = sig_offset(channel_id, &enc_keys.pk);
    KeyPair {
        sk: enc_keys.sk + r,
        pk: enc_keys.pk.mul(&GroupElement::base_pow(&r)),
    }
}
