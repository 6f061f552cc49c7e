//! Canonical byte serialization shared by blocks and protocol messages.
//!
//! Integers are fixed-width little-endian, byte strings carry a `u32`
//! length prefix, and digests are written raw. Decoding is strict: trailing
//! bytes are an error, so every value has exactly one encoding.

use thiserror::Error;

use crate::crypto::{CryptoError, Group};
use crate::hash::Hash256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("unexpected end of input at offset {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("unknown tag {tag:#04x} for {what}")]
    UnknownTag { what: &'static str, tag: u8 },
    #[error("invalid value: {0}")]
    Invalid(&'static str),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.u8(v as u8)
    }

    pub fn hash(&mut self, h: &Hash256) -> &mut Self {
        self.buf.extend_from_slice(&h.0);
        self
    }

    pub fn bytes(&mut self, data: &[u8]) -> &mut Self {
        self.u32(u32::try_from(data.len()).expect("byte string under 4 GiB"));
        self.buf.extend_from_slice(data);
        self
    }

    pub fn raw(&mut self, data: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(data);
        self
    }

    pub fn scalar<G: Group>(&mut self, group: &G, s: &G::Scalar) -> &mut Self {
        group.encode_scalar(s, &mut self.buf);
        self
    }

    pub fn element<G: Group>(&mut self, group: &G, e: &G::Element) -> &mut Self {
        group.encode_element(e, &mut self.buf);
        self
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug, Clone)]
pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.data.len() - self.pos < n {
            return Err(WireError::Truncated(self.pos));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn bool(&mut self) -> Result<bool, WireError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(WireError::Invalid("boolean byte")),
        }
    }

    pub fn hash(&mut self) -> Result<Hash256, WireError> {
        Ok(Hash256(self.take(32)?.try_into().expect("32 bytes")))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], WireError> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    pub fn raw(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        self.take(n)
    }

    pub fn scalar<G: Group>(&mut self, group: &G) -> Result<G::Scalar, WireError> {
        let bytes = self.take(group.scalar_len())?;
        Ok(group.decode_scalar(bytes)?)
    }

    pub fn element<G: Group>(&mut self, group: &G) -> Result<G::Element, WireError> {
        let bytes = self.take(group.element_len())?;
        Ok(group.decode_element(bytes)?)
    }

    pub fn finish(self) -> Result<(), WireError> {
        match self.data.len() - self.pos {
            0 => Ok(()),
            n => Err(WireError::Trailing(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_little_endian_and_length_prefixed() {
        let mut w = Writer::new();
        w.u32(1).u64(2).bytes(b"ab").u8(7);
        assert_eq!(
            w.finish(),
            vec![1, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0, 2, 0, 0, 0, b'a', b'b', 7]
        );
    }

    #[test]
    fn reader_is_strict() {
        let mut r = Reader::new(&[1, 0, 0]);
        assert_eq!(r.u32(), Err(WireError::Truncated(0)));
        let mut r = Reader::new(&[1, 2]);
        r.u8().unwrap();
        assert_eq!(r.finish(), Err(WireError::Trailing(1)));
        assert!(Reader::new(&[2]).bool().is_err());
    }
}
