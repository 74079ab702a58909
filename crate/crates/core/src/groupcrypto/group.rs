//! Prime-order group abstraction.
//!
//! Everything above this module is written against [`PrimeGroup`] so the
//! same key, encryption and signature code runs over secp256k1 and over a
//! small Schnorr subgroup of `Z_p*` whose arithmetic can be checked by hand.

use std::fmt::Debug;
use std::ops::{Add, Mul};

use rand::{CryptoRng, RngCore};

use super::secp256k1::Secp256k1;

/// Width of a serialized scalar, independent of the backend.
pub const SCALAR_LEN: usize = 32;

/// A cyclic group of prime order `q` with a fixed generator, written
/// multiplicatively.
pub trait PrimeGroup:
    Copy + Clone + Debug + Default + PartialEq + Eq + Send + Sync + 'static
{
    type Scalar: Copy + Debug + PartialEq + Eq + Send + Sync;
    type Element: Clone + Debug + PartialEq + Eq + Send + Sync;

    /// Fixed width of a canonical element encoding.
    const ELEMENT_LEN: usize;
    const NAME: &'static str;

    /// Group order `q`, big-endian, left-padded to 32 bytes.
    fn order_be() -> [u8; SCALAR_LEN];

    fn scalar_reduce(bytes: &[u8; SCALAR_LEN]) -> Self::Scalar;
    fn scalar_from_canonical(bytes: &[u8; SCALAR_LEN]) -> Option<Self::Scalar>;
    fn scalar_to_bytes(s: &Self::Scalar) -> [u8; SCALAR_LEN];
    fn scalar_add(a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar;
    fn scalar_mul(a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar;
    fn scalar_is_zero(s: &Self::Scalar) -> bool;
    /// Uniform in `[1, q-1]`.
    fn random_nonzero_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> Self::Scalar;

    fn identity() -> Self::Element;
    fn base_pow(s: &Self::Scalar) -> Self::Element;
    fn pow(e: &Self::Element, s: &Self::Scalar) -> Self::Element;
    fn op(a: &Self::Element, b: &Self::Element) -> Self::Element;
    /// Exactly `ELEMENT_LEN` bytes. The identity encodes to all zeros,
    /// which `element_from_bytes` rejects.
    fn element_to_bytes(e: &Self::Element) -> Vec<u8>;
    /// Accepts only canonical encodings of non-identity group members.
    fn element_from_bytes(bytes: &[u8]) -> Option<Self::Element>;
}

/// An integer modulo the group order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scalar<G: PrimeGroup = Secp256k1>(pub(crate) G::Scalar);

impl<G: PrimeGroup> Scalar<G> {
    pub fn zero() -> Self {
        Self::reduce(&[0u8; SCALAR_LEN])
    }

    /// Interprets `bytes` as a big-endian integer and reduces it mod `q`.
    pub fn reduce(bytes: &[u8; SCALAR_LEN]) -> Self {
        Scalar(G::scalar_reduce(bytes))
    }

    /// Canonical decoding: rejects values `>= q`.
    pub fn from_bytes(bytes: &[u8; SCALAR_LEN]) -> Option<Self> {
        G::scalar_from_canonical(bytes).map(Scalar)
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        let arr: [u8; SCALAR_LEN] = bytes.try_into().ok()?;
        Self::from_bytes(&arr)
    }

    pub fn to_bytes(&self) -> [u8; SCALAR_LEN] {
        G::scalar_to_bytes(&self.0)
    }

    pub fn is_zero(&self) -> bool {
        G::scalar_is_zero(&self.0)
    }

    pub fn random_nonzero<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Scalar(G::random_nonzero_scalar(rng))
    }
}

impl<G: PrimeGroup> Add for Scalar<G> {
    type Output = Scalar<G>;
    fn add(self, rhs: Self) -> Self {
        Scalar(G::scalar_add(&self.0, &rhs.0))
    }
}

impl<G: PrimeGroup> Mul for Scalar<G> {
    type Output = Scalar<G>;
    fn mul(self, rhs: Self) -> Self {
        Scalar(G::scalar_mul(&self.0, &rhs.0))
    }
}

/// A member of the group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupElement<G: PrimeGroup = Secp256k1>(pub(crate) G::Element);

impl<G: PrimeGroup> GroupElement<G> {
    pub const LEN: usize = G::ELEMENT_LEN;

    pub fn generator() -> Self {
        Self::base_pow(&Scalar::reduce(&one()))
    }

    pub fn identity() -> Self {
        GroupElement(G::identity())
    }

    /// `g^s`.
    pub fn base_pow(s: &Scalar<G>) -> Self {
        GroupElement(G::base_pow(&s.0))
    }

    /// `self^s`.
    pub fn pow(&self, s: &Scalar<G>) -> Self {
        GroupElement(G::pow(&self.0, &s.0))
    }

    /// The group law.
    pub fn mul(&self, other: &Self) -> Self {
        GroupElement(G::op(&self.0, &other.0))
    }

    pub fn is_identity(&self) -> bool {
        self.0 == G::identity()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        G::element_to_bytes(&self.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != G::ELEMENT_LEN {
            return None;
        }
        G::element_from_bytes(bytes).map(GroupElement)
    }
}

fn one() -> [u8; SCALAR_LEN] {
    let mut b = [0u8; SCALAR_LEN];
    b[SCALAR_LEN - 1] = 1;
    b
}
