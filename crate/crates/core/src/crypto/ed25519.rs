use curve25519_dalek::constants::ED25519_BASEPOINT_POINT;
use curve25519_dalek::edwards::{CompressedEdwardsY, EdwardsPoint};
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::Identity;
use rand::RngCore;

use super::{CryptoError, Group, GroupParams};

/// The prime-order subgroup of edwards25519, order
/// `l = 2^252 + 27742317777372353535851937790883648493`.
///
/// Elements use the 32-byte compressed Edwards-y encoding; decoding rejects
/// non-canonical encodings and points with a small-order component.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ed25519Group;

impl Group for Ed25519Group {
    type Scalar = Scalar;
    type Element = EdwardsPoint;

    fn params(&self) -> GroupParams {
        GroupParams {
            name: "ed25519",
            descriptor: "edwards25519".to_string(),
            generator: ED25519_BASEPOINT_POINT.compress().to_bytes().to_vec(),
            order: "7237005577332262213973186563042994240857116359379907606001950938285454250989"
                .to_string(),
            security_bits: 128,
        }
    }

    fn identity(&self) -> EdwardsPoint {
        EdwardsPoint::identity()
    }

    fn generator(&self) -> EdwardsPoint {
        ED25519_BASEPOINT_POINT
    }

    fn mul(&self, a: &EdwardsPoint, b: &EdwardsPoint) -> EdwardsPoint {
        a + b
    }

    fn invert(&self, a: &EdwardsPoint) -> EdwardsPoint {
        -a
    }

    fn pow(&self, base: &EdwardsPoint, k: &Scalar) -> EdwardsPoint {
        base * k
    }

    fn pow_generator(&self, k: &Scalar) -> EdwardsPoint {
        EdwardsPoint::mul_base(k)
    }

    fn scalar_from_u64(&self, v: u64) -> Scalar {
        Scalar::from(v)
    }

    fn scalar_add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        a + b
    }

    fn scalar_mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        a * b
    }

    fn scalar_from_le_bytes(&self, bytes: &[u8]) -> Scalar {
        if bytes.len() <= 32 {
            let mut buf = [0u8; 32];
            buf[..bytes.len()].copy_from_slice(bytes);
            return Scalar::from_bytes_mod_order(buf);
        }
        // Horner over 32-byte limbs, most significant limb first
        let radix = {
            let mut r = [0u8; 32];
            r[31] = 1; // 2^248
            Scalar::from_bytes_mod_order(r) * Scalar::from(256u64)
        };
        bytes.rchunks(32).fold(Scalar::ZERO, |acc, chunk| {
            let mut buf = [0u8; 32];
            buf[..chunk.len()].copy_from_slice(chunk);
            acc * radix + Scalar::from_bytes_mod_order(buf)
        })
    }

    fn random_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        let mut wide = [0u8; 64];
        rng.fill_bytes(&mut wide);
        Scalar::from_bytes_mod_order_wide(&wide)
    }

    fn scalar_len(&self) -> usize {
        32
    }

    fn encode_scalar(&self, s: &Scalar, out: &mut Vec<u8>) {
        out.extend_from_slice(s.as_bytes());
    }

    fn decode_scalar(&self, bytes: &[u8]) -> Result<Scalar, CryptoError> {
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| CryptoError::MalformedScalar("wrong length"))?;
        Option::from(Scalar::from_canonical_bytes(arr))
            .ok_or(CryptoError::MalformedScalar("not reduced"))
    }

    fn element_len(&self) -> usize {
        32
    }

    fn encode_element(&self, e: &EdwardsPoint, out: &mut Vec<u8>) {
        out.extend_from_slice(e.compress().as_bytes());
    }

    fn decode_element(&self, bytes: &[u8]) -> Result<EdwardsPoint, CryptoError> {
        let compressed = CompressedEdwardsY::from_slice(bytes)
            .map_err(|_| CryptoError::MalformedElement("wrong length"))?;
        let point = compressed
            .decompress()
            .ok_or(CryptoError::MalformedElement("not on the curve"))?;
        if point.compress() != compressed {
            return Err(CryptoError::MalformedElement("non-canonical encoding"));
        }
        if !point.is_torsion_free() {
            return Err(CryptoError::MalformedElement("small-order component"));
        }
        Ok(point)
    }
}
