use std::fmt;

use crate::crypto::{self, Group};
use crate::wire::{Reader, WireError, Writer};

use super::CosiError;

/// Roster-indexed bit vector of witnesses that did not co-sign.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct ExceptionMask {
    len: usize,
    words: Vec<u64>,
}

impl ExceptionMask {
    pub fn new(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn from_positions(len: usize, positions: impl IntoIterator<Item = usize>) -> Self {
        let mut mask = Self::new(len);
        for p in positions {
            mask.set(p);
        }
        mask
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Panics if `pos` is out of range.
    pub fn set(&mut self, pos: usize) {
        assert!(pos < self.len, "mask position {pos} out of range {}", self.len);
        self.words[pos / 64] |= 1 << (pos % 64);
    }

    pub fn contains(&self, pos: usize) -> bool {
        pos < self.len && self.words[pos / 64] & (1 << (pos % 64)) != 0
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn union_with(&mut self, other: &ExceptionMask) {
        assert_eq!(self.len, other.len, "mask length mismatch");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn is_superset(&self, other: &ExceptionMask) -> bool {
        self.len == other.len && self.words.iter().zip(&other.words).all(|(a, b)| a & b == *b)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&p| self.contains(p))
    }

    /// Total weight of the positions *not* in the mask.
    pub fn signed_weight(&self, weights: &[u64]) -> u64 {
        weights
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.contains(*i))
            .map(|(_, w)| w)
            .sum()
    }

    pub fn encode(&self, w: &mut Writer) {
        w.u32(u32::try_from(self.len).expect("roster under 2^32"));
        let bytes: Vec<u8> = (0..self.len.div_ceil(8))
            .map(|i| (self.words[i / 8] >> ((i % 8) * 8)) as u8)
            .collect();
        w.raw(&bytes);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let len = r.u32()? as usize;
        let bytes = r.raw(len.div_ceil(8))?;
        let mut mask = Self::new(len);
        for (i, &b) in bytes.iter().enumerate() {
            mask.words[i / 8] |= u64::from(b) << ((i % 8) * 8);
        }
        // padding bits past `len` must be clear for the encoding to be canonical
        if len % 8 != 0 && bytes[bytes.len() - 1] >> (len % 8) != 0 {
            return Err(WireError::Invalid("mask padding bits set"));
        }
        Ok(mask)
    }
}

impl fmt::Debug for ExceptionMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ExceptionMask({}/{}: ", self.count(), self.len)?;
        f.debug_set().entries(self.iter()).finish()?;
        f.write_str(")")
    }
}

/// Aggregate Schnorr signature `(V, c, r)` and the set of roster members it
/// does not cover.
#[derive(Clone, PartialEq, Eq)]
pub struct CollectiveSignature<G: Group> {
    pub commitment: G::Element,
    pub challenge: G::Scalar,
    pub response: G::Scalar,
    pub mask: ExceptionMask,
}

impl<G: Group> fmt::Debug for CollectiveSignature<G> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CollectiveSignature")
            .field("mask", &self.mask)
            .finish_non_exhaustive()
    }
}

impl<G: Group> CollectiveSignature<G> {
    pub fn encode(&self, group: &G, w: &mut Writer) {
        w.element(group, &self.commitment)
            .scalar(group, &self.challenge)
            .scalar(group, &self.response);
        self.mask.encode(w);
    }

    pub fn decode(group: &G, r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Self {
            commitment: r.element(group)?,
            challenge: r.scalar(group)?,
            response: r.scalar(group)?,
            mask: ExceptionMask::decode(r)?,
        })
    }

    pub fn encoded_len(&self, group: &G) -> usize {
        group.element_len() + 2 * group.scalar_len() + 4 + self.mask.len().div_ceil(8)
    }

    /// Weight of the roster members that co-signed.
    pub fn signed_weight(&self, weights: &[u64]) -> u64 {
        self.mask.signed_weight(weights)
    }
}

/// `Π X_i` over the members outside `mask`.
///
/// Computed as the full roster aggregate with the excepted keys divided out,
/// so the cost tracks the number of exceptions once the full product is known.
pub fn aggregate_key<G: Group>(
    group: &G,
    roster: &[G::Element],
    mask: &ExceptionMask,
) -> Result<G::Element, CosiError> {
    if mask.len() != roster.len() {
        return Err(CosiError::MaskLength {
            expected: roster.len(),
            got: mask.len(),
        });
    }
    let full = group.product(roster);
    let excepted = group.product(mask.iter().map(|i| &roster[i]));
    Ok(group.mul(&full, &group.invert(&excepted)))
}

/// Checks the Schnorr equation for the adjusted aggregate key without
/// re-deriving the challenge. Used with injected test challenges.
pub fn verify_aggregate<G: Group>(
    group: &G,
    roster: &[G::Element],
    sig: &CollectiveSignature<G>,
) -> Result<bool, CosiError> {
    let key = aggregate_key(group, roster, &sig.mask)?;
    Ok(crypto::verify(group, &key, &sig.commitment, &sig.challenge, &sig.response))
}

/// Full verification: the challenge must be the hash of the aggregate
/// commitment and `message`, and the Schnorr equation must hold for the
/// aggregate key of the signers.
pub fn verify_collective<G: Group>(
    group: &G,
    roster: &[G::Element],
    sig: &CollectiveSignature<G>,
    message: &[u8],
) -> Result<bool, CosiError> {
    let key = aggregate_key(group, roster, &sig.mask)?;
    if crypto::challenge(group, &sig.commitment, message) != sig.challenge {
        return Ok(false);
    }
    Ok(crypto::verify(group, &key, &sig.commitment, &sig.challenge, &sig.response))
}
