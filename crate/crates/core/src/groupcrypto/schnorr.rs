//! Schnorr signatures with deterministic nonces.

use super::{
    hash_to_scalar_labeled, GroupElement, PrimeGroup, Scalar, Secp256k1, LABEL_CHALLENGE,
    LABEL_NONCE, SCALAR_LEN,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Signature<G: PrimeGroup = Secp256k1> {
    pub commitment: GroupElement<G>,
    pub response: Scalar<G>,
}

impl<G: PrimeGroup> Signature<G> {
    pub const LEN: usize = G::ELEMENT_LEN + SCALAR_LEN;

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.commitment.to_bytes();
        out.extend_from_slice(&self.response.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != Self::LEN {
            return None;
        }
        let (c, r) = bytes.split_at(G::ELEMENT_LEN);
        Some(Signature {
            commitment: GroupElement::from_bytes(c)?,
            response: Scalar::from_slice(r)?,
        })
    }
}

fn challenge<G: PrimeGroup>(
    commitment: &GroupElement<G>,
    pk: &GroupElement<G>,
    msg: &[u8],
) -> Scalar<G> {
    hash_to_scalar_labeled(
        LABEL_CHALLENGE,
        &[&commitment.to_bytes(), &pk.to_bytes(), msg],
    )
}

pub fn sign<G: PrimeGroup>(sk: &Scalar<G>, msg: &[u8]) -> Signature<G> {
    let pk = GroupElement::base_pow(sk);
    let mut counter = 0u32;
    let k = loop {
        let k: Scalar<G> =
            hash_to_scalar_labeled(LABEL_NONCE, &[&sk.to_bytes(), msg, &counter.to_be_bytes()]);
        if !k.is_zero() {
            break k;
        }
        counter += 1;
    };
    let commitment = GroupElement::base_pow(&k);
    let c = challenge(&commitment, &pk, msg);
    Signature {
        response: k + c * *sk,
        commitment,
    }
}

/// Checks `g^response == commitment * pk^c`. Never panics.
pub fn verify<G: PrimeGroup>(pk: &GroupElement<G>, msg: &[u8], sig: &Signature<G>) -> bool {
    if pk.is_identity() {
        return false;
    }
    let c = challenge(&sig.commitment, pk, msg);
    GroupElement::base_pow(&sig.response) == sig.commitment.mul(&pk.pow(&c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groupcrypto::{keygen, KeyPair, ToyGroup};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn sign_verify_and_rejections() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let kp: KeyPair = keygen(&mut rng);
        let other: KeyPair = keygen(&mut rng);
        let sig = sign(&kp.sk, b"destinations");
        assert!(verify(&kp.pk, b"destinations", &sig));
        assert!(!verify(&kp.pk, b"destinationz", &sig));
        assert!(!verify(&other.pk, b"destinations", &sig));
        assert_eq!(sig.to_bytes().len(), 65);
        assert_eq!(
            Signature::<Secp256k1>::from_bytes(&sig.to_bytes()),
            Some(sig)
        );
    }

    #[test]
    fn toy_group_signature_equation() {
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        let kp: KeyPair<ToyGroup> = keygen(&mut rng);
        let sig = sign(&kp.sk, b"m");
        assert!(verify(&kp.pk, b"m", &sig));
        assert_eq!(Signature::<ToyGroup>::LEN, 40);
    }

    #[test]
    fn identity_key_never_verifies() {
        let sig = sign::<Secp256k1>(&Scalar::reduce(&[1u8; 32]), b"x");
        assert!(!verify(&GroupElement::identity(), b"x", &sig));
    }
}
