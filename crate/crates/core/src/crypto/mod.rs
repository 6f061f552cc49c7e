//! Prime-order groups and the Schnorr primitives that collective signing is
//! built from.
//!
//! Two backends implement [`Group`]: [`Ed25519Group`], the prime-order subgroup
//! of the edwards25519 curve, and [`ToyGroup`], a Schnorr group over a small
//! safe prime that is small enough to enumerate exhaustively in tests.
//!
//! The group operation is written multiplicatively throughout (`mul`, `pow`),
//! matching the usual Schnorr notation `G^r = V * X^c`, even though the curve
//! backend is additive underneath.

mod ed25519;
mod schnorr;
mod toy;

use std::fmt;

use rand::RngCore;
use thiserror::Error;

pub use ed25519::Ed25519Group;
pub use schnorr::{
    challenge, commit, commit_with_rng, keygen, respond, verify, verify_encoded, KeyPair,
    CHALLENGE_TAG,
};
pub use toy::{ToyElement, ToyGroup, ToyScalar};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("malformed scalar encoding ({0})")]
    MalformedScalar(&'static str),
    #[error("malformed group element encoding ({0})")]
    MalformedElement(&'static str),
    #[error("invalid group parameters: {0}")]
    InvalidParams(String),
}

/// Human-readable description of a group instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupParams {
    pub name: &'static str,
    /// Modulus for prime-field groups, curve name for elliptic curves.
    pub descriptor: String,
    /// Canonical encoding of the generator.
    pub generator: Vec<u8>,
    /// Prime group order, in decimal.
    pub order: String,
    pub security_bits: u32,
}

/// A cyclic group of prime order `q` with a fixed generator `G`.
///
/// Scalars are integers mod `q`, always kept reduced. Encodings are
/// fixed-width and canonical: `decode(encode(x)) == x`, and every accepted
/// encoding is the unique encoding of its value.
pub trait Group: Clone + fmt::Debug + Send + Sync + 'static {
    type Scalar: Copy + Eq + fmt::Debug + Send + Sync + 'static;
    type Element: Copy + Eq + fmt::Debug + Send + Sync + 'static;

    fn params(&self) -> GroupParams;

    fn identity(&self) -> Self::Element;
    fn generator(&self) -> Self::Element;
    /// The group operation.
    fn mul(&self, a: &Self::Element, b: &Self::Element) -> Self::Element;
    fn invert(&self, a: &Self::Element) -> Self::Element;
    fn pow(&self, base: &Self::Element, k: &Self::Scalar) -> Self::Element;
    fn pow_generator(&self, k: &Self::Scalar) -> Self::Element {
        self.pow(&self.generator(), k)
    }

    fn scalar_from_u64(&self, v: u64) -> Self::Scalar;
    fn scalar_add(&self, a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar;
    fn scalar_mul(&self, a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar;
    fn scalar_zero(&self) -> Self::Scalar {
        self.scalar_from_u64(0)
    }
    /// Interprets `bytes` as a little-endian integer and reduces it mod `q`.
    fn scalar_from_le_bytes(&self, bytes: &[u8]) -> Self::Scalar;
    /// Uniform scalar in `[0, q)`.
    fn random_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> Self::Scalar;

    fn scalar_len(&self) -> usize;
    fn encode_scalar(&self, s: &Self::Scalar, out: &mut Vec<u8>);
    fn decode_scalar(&self, bytes: &[u8]) -> Result<Self::Scalar, CryptoError>;

    fn element_len(&self) -> usize;
    fn encode_element(&self, e: &Self::Element, out: &mut Vec<u8>);
    fn decode_element(&self, bytes: &[u8]) -> Result<Self::Element, CryptoError>;

    fn scalar_bytes(&self, s: &Self::Scalar) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.scalar_len());
        self.encode_scalar(s, &mut out);
        out
    }

    fn element_bytes(&self, e: &Self::Element) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.element_len());
        self.encode_element(e, &mut out);
        out
    }

    /// Product of a sequence of elements; the identity for an empty sequence.
    fn product<'a, I>(&self, elements: I) -> Self::Element
    where
        I: IntoIterator<Item = &'a Self::Element>,
    {
        elements
            .into_iter()
            .fold(self.identity(), |acc, e| self.mul(&acc, e))
    }

    /// Sum of a sequence of scalars mod `q`.
    fn scalar_sum<'a, I>(&self, scalars: I) -> Self::Scalar
    where
        I: IntoIterator<Item = &'a Self::Scalar>,
    {
        scalars
            .into_iter()
            .fold(self.scalar_zero(), |acc, s| self.scalar_add(&acc, s))
    }
}
