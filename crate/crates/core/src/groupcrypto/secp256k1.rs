//! secp256k1 backend with 33-byte compressed point encoding.

use k256::elliptic_curve::group::GroupEncoding;
use k256::elliptic_curve::ops::Reduce;
use k256::elliptic_curve::PrimeField;
use k256::{AffinePoint, FieldBytes, NonZeroScalar, ProjectivePoint, U256};
use rand::{CryptoRng, RngCore};

use super::group::{PrimeGroup, SCALAR_LEN};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Secp256k1;

const ORDER_BE: [u8; 32] = [
    0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xfe,
    0xba, 0xae, 0xdc, 0xe6, 0xaf, 0x48, 0xa0, 0x3b, 0xbf, 0xd2, 0x5e, 0x8c, 0xd0, 0x36, 0x41, 0x41,
];

impl PrimeGroup for Secp256k1 {
    type Scalar = k256::Scalar;
    type Element = ProjectivePoint;

    const ELEMENT_LEN: usize = 33;
    const NAME: &'static str = "secp256k1";

    fn order_be() -> [u8; SCALAR_LEN] {
        ORDER_BE
    }

    fn scalar_reduce(bytes: &[u8; SCALAR_LEN]) -> Self::Scalar {
        <k256::Scalar as Reduce<U256>>::reduce_bytes(FieldBytes::from_slice(bytes))
    }

    fn scalar_from_canonical(bytes: &[u8; SCALAR_LEN]) -> Option<Self::Scalar> {
        Option::from(k256::Scalar::from_repr(*FieldBytes::from_slice(bytes)))
    }

    fn scalar_to_bytes(s: &Self::Scalar) -> [u8; SCALAR_LEN] {
        s.to_bytes().into()
    }

    fn scalar_add(a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar {
        a + b
    }

    fn scalar_mul(a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar {
        a * b
    }

    fn scalar_is_zero(s: &Self::Scalar) -> bool {
        bool::from(s.is_zero())
    }

    fn random_nonzero_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> Self::Scalar {
        *NonZeroScalar::random(rng)
    }

    fn identity() -> Self::Element {
        ProjectivePoint::IDENTITY
    }

    fn base_pow(s: &Self::Scalar) -> Self::Element {
        ProjectivePoint::GENERATOR * s
    }

    fn pow(e: &Self::Element, s: &Self::Scalar) -> Self::Element {
        e * s
    }

    fn op(a: &Self::Element, b: &Self::Element) -> Self::Element {
        a + b
    }

    fn element_to_bytes(e: &Self::Element) -> Vec<u8> {
        if *e == ProjectivePoint::IDENTITY {
            return vec![0u8; Self::ELEMENT_LEN];
        }
        e.to_affine().to_bytes().to_vec()
    }

    fn element_from_bytes(bytes: &[u8]) -> Option<Self::Element> {
        if bytes.len() != Self::ELEMENT_LEN || !(bytes[0] == 0x02 || bytes[0] == 0x03) {
            return None;
        }
        let repr = k256::CompressedPoint::clone_from_slice(bytes);
        let affine: Option<AffinePoint> = AffinePoint::from_bytes(&repr).into();
        affine.map(ProjectivePoint::from)
    }
}
