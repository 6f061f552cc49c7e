use std::fmt;
use std::sync::Arc;

use crate::cosi::CollectiveSignature;
use crate::crypto::Group;
use crate::hash::Hash256;
use crate::wire::{Reader, WireError, Writer};

pub type NodeId = u32;

const KEYBLOCK_TAG: u8 = b'K';
const MICROBLOCK_TAG: u8 = b'M';

/// What a collective signature over a block hash attests to. The kind is
/// prefixed to the signed bytes so a prepare signature can never stand in for
/// a commit signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignedKind {
    Prepare,
    Commit,
    Keyblock,
}

pub fn signing_message(kind: SignedKind, hash: &Hash256) -> Vec<u8> {
    let tag: &[u8] = match kind {
        SignedKind::Prepare => b"prepare",
        SignedKind::Commit => b"commit",
        SignedKind::Keyblock => b"keyblock",
    };
    [tag, &hash.0].concat()
}

fn encode_sig<G: Group>(group: &G, sig: &Option<CollectiveSignature<G>>, w: &mut Writer) {
    match sig {
        None => {
            w.u8(0);
        }
        Some(s) => {
            w.u8(1);
            s.encode(group, w);
        }
    }
}

fn decode_sig<G: Group>(group: &G, r: &mut Reader<'_>) -> Result<Option<CollectiveSignature<G>>, WireError> {
    match r.u8()? {
        0 => Ok(None),
        1 => Ok(Some(CollectiveSignature::decode(group, r)?)),
        tag => Err(WireError::UnknownTag {
            what: "optional signature",
            tag,
        }),
    }
}

/// Proof-of-work block that elects a leader and credits one share.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyBlock<G: Group> {
    pub height: u64,
    pub prev: Hash256,
    pub miner: NodeId,
    pub miner_key: G::Element,
    pub nonce: u64,
    /// Leading zero bits the header hash must have.
    pub difficulty_bits: u32,
    /// Simulated milliseconds.
    pub timestamp: u64,
    /// Co-signature of the consensus group that accepted the keyblock.
    pub signature: Option<CollectiveSignature<G>>,
}

impl<G: Group> fmt::Debug for KeyBlock<G> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyBlock")
            .field("height", &self.height)
            .field("miner", &self.miner)
            .field("prev", &self.prev)
            .field("signed", &self.signature.is_some())
            .finish()
    }
}

impl<G: Group> KeyBlock<G> {
    /// Header layout: tag `K`, height, prev, miner, miner key, nonce,
    /// difficulty bits (u32), timestamp.
    pub fn encode_header(&self, group: &G, w: &mut Writer) {
        w.u8(KEYBLOCK_TAG)
            .u64(self.height)
            .hash(&self.prev)
            .u32(self.miner)
            .element(group, &self.miner_key)
            .u64(self.nonce)
            .u32(self.difficulty_bits)
            .u64(self.timestamp);
    }

    /// Hash of the header; the signature is excluded because it signs this hash.
    pub fn hash(&self, group: &G) -> Hash256 {
        let mut w = Writer::new();
        self.encode_header(group, &mut w);
        Hash256::of(&w.finish())
    }

    pub fn pow_valid(&self, group: &G) -> bool {
        self.hash(group).leading_zero_bits() >= self.difficulty_bits
    }

    /// Searches nonces upward from `self.nonce` until the proof-of-work holds.
    pub fn solve(mut self, group: &G) -> Self {
        while !self.pow_valid(group) {
            self.nonce = self.nonce.wrapping_add(1);
        }
        self
    }

    pub fn encode(&self, group: &G, w: &mut Writer) {
        self.encode_header(group, w);
        encode_sig(group, &self.signature, w);
    }

    pub fn decode(group: &G, r: &mut Reader<'_>) -> Result<Self, WireError> {
        let tag = r.u8()?;
        if tag != KEYBLOCK_TAG {
            return Err(WireError::UnknownTag {
                what: "keyblock",
                tag,
            });
        }
        Ok(Self {
            height: r.u64()?,
            prev: r.hash()?,
            miner: r.u32()?,
            miner_key: r.element(group)?,
            nonce: r.u64()?,
            difficulty_bits: r.u32()?,
            timestamp: r.u64()?,
            signature: decode_sig(group, r)?,
        })
    }

    pub fn header_len(&self, group: &G) -> usize {
        1 + 8 + 32 + 4 + group.element_len() + 8 + 4 + 8
    }

    pub fn encoded_len(&self, group: &G) -> usize {
        self.header_len(group) + 1 + self.signature.as_ref().map_or(0, |s| s.encoded_len(group))
    }
}

/// Transactions carried by a microblock. Their contents are opaque.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Transactions(Vec<Arc<[u8]>>),
    /// Stand-in for bulk simulated traffic: a declared count and byte size
    /// without materialized bytes, identified by `tag`.
    Synthetic { tx_count: u64, bytes: u64, tag: Hash256 },
}

impl Payload {
    pub fn empty() -> Self {
        Payload::Transactions(Vec::new())
    }

    pub fn tx_count(&self) -> u64 {
        match self {
            Payload::Transactions(t) => t.len() as u64,
            Payload::Synthetic { tx_count, .. } => *tx_count,
        }
    }

    pub fn byte_len(&self) -> u64 {
        match self {
            Payload::Transactions(t) => t.iter().map(|tx| tx.len() as u64).sum(),
            Payload::Synthetic { bytes, .. } => *bytes,
        }
    }

    pub fn digest(&self) -> Hash256 {
        let mut w = Writer::new();
        match self {
            Payload::Transactions(txs) => {
                w.u8(0).u64(txs.len() as u64);
                for tx in txs {
                    w.bytes(tx);
                }
            }
            Payload::Synthetic {
                tx_count,
                bytes,
                tag,
            } => {
                w.u8(1).u64(*tx_count).u64(*bytes).hash(tag);
            }
        }
        Hash256::of(&w.finish())
    }

    fn encode(&self, w: &mut Writer) {
        match self {
            Payload::Transactions(txs) => {
                w.u8(0).u32(txs.len() as u32);
                for tx in txs {
                    w.bytes(tx);
                }
            }
            Payload::Synthetic {
                tx_count,
                bytes,
                tag,
            } => {
                w.u8(1).u64(*tx_count).u64(*bytes).hash(tag);
            }
        }
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        match r.u8()? {
            0 => {
                let n = r.u32()?;
                let txs = (0..n)
                    .map(|_| r.bytes().map(Arc::from))
                    .collect::<Result<_, _>>()?;
                Ok(Payload::Transactions(txs))
            }
            1 => Ok(Payload::Synthetic {
                tx_count: r.u64()?,
                bytes: r.u64()?,
                tag: r.hash()?,
            }),
            tag => Err(WireError::UnknownTag {
                what: "payload",
                tag,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MicroHeader {
    pub height: u64,
    pub prev: Hash256,
    /// The era this block belongs to.
    pub keyblock: Hash256,
    pub payload_digest: Hash256,
    pub payload_bytes: u64,
    pub tx_count: u64,
    pub leader: NodeId,
    pub timestamp: u64,
}

impl MicroHeader {
    pub const ENCODED_LEN: usize = 1 + 8 + 32 + 32 + 32 + 8 + 8 + 4 + 8;

    /// Layout: tag `M`, height, prev, keyblock, payload digest, payload
    /// bytes, tx count, leader (u32), timestamp.
    pub fn encode(&self, w: &mut Writer) {
        w.u8(MICROBLOCK_TAG)
            .u64(self.height)
            .hash(&self.prev)
            .hash(&self.keyblock)
            .hash(&self.payload_digest)
            .u64(self.payload_bytes)
            .u64(self.tx_count)
            .u32(self.leader)
            .u64(self.timestamp);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let tag = r.u8()?;
        if tag != MICROBLOCK_TAG {
            return Err(WireError::UnknownTag {
                what: "microblock",
                tag,
            });
        }
        Ok(Self {
            height: r.u64()?,
            prev: r.hash()?,
            keyblock: r.hash()?,
            payload_digest: r.hash()?,
            payload_bytes: r.u64()?,
            tx_count: r.u64()?,
            leader: r.u32()?,
            timestamp: r.u64()?,
        })
    }

    pub fn hash(&self) -> Hash256 {
        let mut w = Writer::new();
        self.encode(&mut w);
        Hash256::of(&w.finish())
    }
}

/// Leader-issued block of transactions, committed by the era's roster.
#[derive(Clone, PartialEq, Eq)]
pub struct MicroBlock<G: Group> {
    pub header: MicroHeader,
    pub payload: Payload,
    /// Commit-round collective signature over the header hash.
    pub signature: Option<CollectiveSignature<G>>,
}

impl<G: Group> fmt::Debug for MicroBlock<G> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MicroBlock")
            .field("height", &self.header.height)
            .field("prev", &self.header.prev)
            .field("keyblock", &self.header.keyblock)
            .field("bytes", &self.header.payload_bytes)
            .field("signed", &self.signature.is_some())
            .finish()
    }
}

impl<G: Group> MicroBlock<G> {
    pub fn new(
        height: u64,
        prev: Hash256,
        keyblock: Hash256,
        leader: NodeId,
        timestamp: u64,
        payload: Payload,
    ) -> Self {
        Self {
            header: MicroHeader {
                height,
                prev,
                keyblock,
                payload_digest: payload.digest(),
                payload_bytes: payload.byte_len(),
                tx_count: payload.tx_count(),
                leader,
                timestamp,
            },
            payload,
            signature: None,
        }
    }

    pub fn hash(&self) -> Hash256 {
        self.header.hash()
    }

    /// Header fields agree with the carried payload.
    pub fn payload_consistent(&self) -> bool {
        self.header.payload_digest == self.payload.digest()
            && self.header.payload_bytes == self.payload.byte_len()
            && self.header.tx_count == self.payload.tx_count()
    }

    pub fn encode(&self, group: &G, w: &mut Writer) {
        self.header.encode(w);
        self.payload.encode(w);
        encode_sig(group, &self.signature, w);
    }

    pub fn decode(group: &G, r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Self {
            header: MicroHeader::decode(r)?,
            payload: Payload::decode(r)?,
            signature: decode_sig(group, r)?,
        })
    }

    /// Bytes on the wire, counting synthetic payloads at their declared size.
    pub fn wire_len(&self, group: &G) -> usize {
        MicroHeader::ENCODED_LEN
            + self.header.payload_bytes as usize
            + 1
            + self.signature.as_ref().map_or(0, |s| s.encoded_len(group))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keygen, Ed25519Group};

    fn key_block() -> KeyBlock<Ed25519Group> {
        KeyBlock {
            height: 1,
            prev: Hash256::of(b"genesis"),
            miner: 7,
            miner_key: keygen(&Ed25519Group, 7).public,
            nonce: 0,
            difficulty_bits: 8,
            timestamp: 600_000,
            signature: None,
        }
    }

    #[test]
    fn keyblock_round_trip_and_pow() {
        let g = Ed25519Group;
        let kb = key_block().solve(&g);
        assert!(kb.pow_valid(&g));
        assert!(kb.hash(&g).leading_zero_bits() >= 8);
        let mut w = Writer::new();
        kb.encode(&g, &mut w);
        let bytes = w.finish();
        assert_eq!(bytes.len(), kb.encoded_len(&g));
        let mut r = Reader::new(&bytes);
        assert_eq!(KeyBlock::decode(&g, &mut r).unwrap(), kb);
        r.finish().unwrap();
    }

    #[test]
    fn microblock_round_trip_and_hash_excludes_signature() {
        let g = Ed25519Group;
        let payload = Payload::Transactions(vec![Arc::from(&b"tx1"[..]), Arc::from(&b"tx22"[..])]);
        let mb = MicroBlock::<Ed25519Group>::new(3, Hash256::of(b"p"), Hash256::of(b"k"), 2, 10, payload);
        assert_eq!(mb.header.payload_bytes, 7);
        assert_eq!(mb.header.tx_count, 2);
        assert!(mb.payload_consistent());
        let mut w = Writer::new();
        mb.encode(&g, &mut w);
        let bytes = w.finish();
        assert_eq!(MicroBlock::decode(&g, &mut Reader::new(&bytes)).unwrap(), mb);

        let synthetic = Payload::Synthetic {
            tx_count: 4000,
            bytes: 1 << 20,
            tag: Hash256::of(b"s"),
        };
        let big = MicroBlock::<Ed25519Group>::new(3, Hash256::ZERO, Hash256::ZERO, 0, 0, synthetic);
        assert_eq!(big.header.payload_bytes, 1 << 20);
        assert!(big.wire_len(&g) > 1 << 20);
    }

    #[test]
    fn signing_messages_are_domain_separated() {
        let h = Hash256::of(b"x");
        assert_ne!(
            signing_message(SignedKind::Prepare, &h),
            signing_message(SignedKind::Commit, &h)
        );
    }
}
