//! Hybrid public-key encryption: an ElGamal-style key encapsulation over the
//! group followed by ChaCha20-Poly1305 under a SHA-256 derived key.
//!
//! Wire format: `ephemeral || u32 BE body length || body || 16-byte tag`.

use chacha20poly1305::aead::{AeadInPlace, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce, Tag};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use super::{CryptoError, GroupElement, PrimeGroup, Scalar, Secp256k1, LABEL_KDF};

pub const MAX_PAYLOAD: usize = 4096;
pub const TAG_LEN: usize = 16;
const LEN_PREFIX: usize = 4;

/// Bytes a single layer adds on top of its payload.
pub const fn ciphertext_overhead(element_len: usize) -> usize {
    element_len + LEN_PREFIX + TAG_LEN
}

/// Layer overhead for the default backend.
pub const CIPHERTEXT_OVERHEAD: usize = ciphertext_overhead(33);

/// The ephemeral element is kept as raw bytes; an invalid encoding is only
/// detected at decryption time and reported as an integrity failure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ciphertext<G: PrimeGroup = Secp256k1> {
    ephemeral: Vec<u8>,
    pub body: Vec<u8>,
    pub tag: [u8; TAG_LEN],
    _group: std::marker::PhantomData<G>,
}

impl<G: PrimeGroup> Ciphertext<G> {
    pub fn serialized_len(payload_len: usize) -> usize {
        payload_len + ciphertext_overhead(G::ELEMENT_LEN)
    }

    pub fn ephemeral_bytes(&self) -> &[u8] {
        &self.ephemeral
    }

    pub fn ephemeral(&self) -> Option<GroupElement<G>> {
        GroupElement::from_bytes(&self.ephemeral)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::serialized_len(self.body.len()));
        out.extend_from_slice(&self.ephemeral);
        out.extend_from_slice(&(self.body.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.body);
        out.extend_from_slice(&self.tag);
        out
    }

    /// Structural parse only: widths and the length prefix must agree.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let el = G::ELEMENT_LEN;
        if bytes.len() < ciphertext_overhead(el) {
            return Err(CryptoError::Malformed("ciphertext too short"));
        }
        let len = u32::from_be_bytes(bytes[el..el + LEN_PREFIX].try_into().unwrap()) as usize;
        if bytes.len() != Self::serialized_len(len) {
            return Err(CryptoError::Malformed("ciphertext length prefix mismatch"));
        }
        let body_start = el + LEN_PREFIX;
        Ok(Ciphertext {
            ephemeral: bytes[..el].to_vec(),
            body: bytes[body_start..body_start + len].to_vec(),
            tag: bytes[body_start + len..].try_into().unwrap(),
            _group: std::marker::PhantomData,
        })
    }

    /// Test hook for tamper experiments.
    pub fn ephemeral_bytes_mut(&mut self) -> &mut Vec<u8> {
        &mut self.ephemeral
    }
}

fn kdf(ephemeral: &[u8], shared: &[u8]) -> Key {
    let digest = Sha256::new()
        .chain_update(LABEL_KDF)
        .chain_update(ephemeral)
        .chain_update(shared)
        .finalize();
    *Key::from_slice(&digest)
}

// Every key is single-use (fresh ephemeral per encryption), so a fixed nonce is sound.
const NONCE: [u8; 12] = [0u8; 12];

pub fn pke_encrypt<G: PrimeGroup, R: RngCore + CryptoRng>(
    pk: &GroupElement<G>,
    payload: &[u8],
    rng: &mut R,
) -> Result<Ciphertext<G>, CryptoError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(CryptoError::PayloadTooLong {
            len: payload.len(),
            max: MAX_PAYLOAD,
        });
    }
    let y = Scalar::<G>::random_nonzero(rng);
    let ephemeral = GroupElement::<G>::base_pow(&y).to_bytes();
    let shared = pk.pow(&y).to_bytes();
    let cipher = ChaCha20Poly1305::new(&kdf(&ephemeral, &shared));
    let mut body = payload.to_vec();
    let tag = cipher
        .encrypt_in_place_detached(Nonce::from_slice(&NONCE), &[], &mut body)
        .expect("payload within chacha20poly1305 limits");
    Ok(Ciphertext {
        ephemeral,
        body,
        tag: tag.into(),
        _group: std::marker::PhantomData,
    })
}

pub fn pke_decrypt<G: PrimeGroup>(
    sk: &Scalar<G>,
    ct: &Ciphertext<G>,
) -> Result<Vec<u8>, CryptoError> {
    let eph = ct.ephemeral().ok_or(CryptoError::IntegrityFailure)?;
    let shared = eph.pow(sk).to_bytes();
    let cipher = ChaCha20Poly1305::new(&kdf(&ct.ephemeral, &shared));
    let mut body = ct.body.clone();
    cipher
        .decrypt_in_place_detached(
            Nonce::from_slice(&NONCE),
            &[],
            &mut body,
            Tag::from_slice(&ct.tag),
        )
        .map_err(|_| CryptoError::IntegrityFailure)?;
    Ok(body)
}
