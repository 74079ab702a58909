//! Schnorr subgroup of `Z_p*` with `p = 2q + 1`, `q = 2^32 - 5`.
//!
//! Small enough that every operation can be recomputed with plain integer
//! arithmetic in tests. Not for real use.

use rand::{CryptoRng, Rng, RngCore};

use super::group::{PrimeGroup, SCALAR_LEN};

pub const TOY_Q: u64 = 4_294_967_291;
pub const TOY_P: u64 = 2 * TOY_Q + 1;
/// 4 is a quadratic residue, so it generates the order-`q` subgroup.
pub const TOY_G: u64 = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ToyGroup;

fn mulmod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub(crate) fn powmod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mulmod(acc, base, m);
        }
        base = mulmod(base, base, m);
        exp >>= 1;
    }
    acc
}

impl PrimeGroup for ToyGroup {
    type Scalar = u64;
    type Element = u64;

    const ELEMENT_LEN: usize = 8;
    const NAME: &'static str = "toy-schnorr-2^32";

    fn order_be() -> [u8; SCALAR_LEN] {
        Self::scalar_to_bytes(&TOY_Q)
    }

    fn scalar_reduce(bytes: &[u8; SCALAR_LEN]) -> u64 {
        bytes.iter().fold(0u64, |acc, b| {
            ((acc as u128 * 256 + *b as u128) % TOY_Q as u128) as u64
        })
    }

    fn scalar_from_canonical(bytes: &[u8; SCALAR_LEN]) -> Option<u64> {
        if bytes[..SCALAR_LEN - 8].iter().any(|b| *b != 0) {
            return None;
        }
        let v = u64::from_be_bytes(bytes[SCALAR_LEN - 8..].try_into().unwrap());
        (v < TOY_Q).then_some(v)
    }

    fn scalar_to_bytes(s: &u64) -> [u8; SCALAR_LEN] {
        let mut out = [0u8; SCALAR_LEN];
        out[SCALAR_LEN - 8..].copy_from_slice(&s.to_be_bytes());
        out
    }

    fn scalar_add(a: &u64, b: &u64) -> u64 {
        ((*a as u128 + *b as u128) % TOY_Q as u128) as u64
    }

    fn scalar_mul(a: &u64, b: &u64) -> u64 {
        mulmod(*a, *b, TOY_Q)
    }

    fn scalar_is_zero(s: &u64) -> bool {
        *s == 0
    }

    fn random_nonzero_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> u64 {
        rng.gen_range(1..TOY_Q)
    }

    fn identity() -> u64 {
        1
    }

    fn base_pow(s: &u64) -> u64 {
        powmod(TOY_G, *s, TOY_P)
    }

    fn pow(e: &u64, s: &u64) -> u64 {
        powmod(*e, *s, TOY_P)
    }

    fn op(a: &u64, b: &u64) -> u64 {
        mulmod(*a, *b, TOY_P)
    }

    fn element_to_bytes(e: &u64) -> Vec<u8> {
        if *e == 1 {
            return vec![0u8; Self::ELEMENT_LEN];
        }
        e.to_be_bytes().to_vec()
    }

    fn element_from_bytes(bytes: &[u8]) -> Option<u64> {
        let v = u64::from_be_bytes(bytes.try_into().ok()?);
        if v <= 1 || v >= TOY_P || powmod(v, TOY_Q, TOY_P) != 1 {
            return None;
        }
        Some(v)
    }
}
