use std::fmt;
use std::sync::Arc;

use crate::chain::{KeyBlock, MicroBlock, Payload};
use crate::cosi::{CollectiveSignature, CosiMessage, RoundId};
use crate::crypto::Group;
use crate::hash::Hash256;
use crate::wire::{Reader, WireError, Writer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RoundKind {
    Prepare,
    Commit,
    Keyblock,
}

/// Everything that distinguishes one signing round from another. Packed into
/// the CoSi round counter so that the CoSi layer stays oblivious to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RoundTag {
    pub era: Hash256,
    pub height: u64,
    pub view: u32,
    pub kind: RoundKind,
    /// Retry counter within one view, bumped on tree fallback or checkpoint
    /// adoption.
    pub attempt: u8,
    pub flat: bool,
}

impl RoundTag {
    pub const MAX_HEIGHT: u64 = u32::MAX as u64;
    pub const MAX_VIEW: u32 = u16::MAX as u32;

    /// Layout of the round counter: height (32 bits), view (16), attempt (8),
    /// flat flag (bit 2), kind (bits 0..2).
    pub fn round_id(&self) -> RoundId {
        debug_assert!(self.height <= Self::MAX_HEIGHT && self.view <= Self::MAX_VIEW);
        let kind = match self.kind {
            RoundKind::Prepare => 0,
            RoundKind::Commit => 1,
            RoundKind::Keyblock => 2,
        };
        RoundId {
            era: self.era,
            round: (self.height << 32)
                | ((self.view as u64 & 0xffff) << 16)
                | ((self.attempt as u64) << 8)
                | ((self.flat as u64) << 2)
                | kind,
        }
    }

    pub fn from_round_id(id: RoundId) -> Option<Self> {
        let r = id.round;
        let kind = match r & 3 {
            0 => RoundKind::Prepare,
            1 => RoundKind::Commit,
            2 => RoundKind::Keyblock,
            _ => return None,
        };
        if r & 0xf8 != 0 {
            return None;
        }
        Some(Self {
            era: id.era,
            height: r >> 32,
            view: ((r >> 16) & 0xffff) as u32,
            kind,
            attempt: ((r >> 8) & 0xff) as u8,
            flat: r & 4 != 0,
        })
    }

    /// Prepare locks and view-change bookkeeping ignore the retry counter and
    /// topology.
    pub fn slot(&self) -> (Hash256, u64, u32) {
        (self.era, self.height, self.view)
    }
}

/// A microblock together with the prepare-round signature of its roster.
#[derive(Clone, PartialEq, Eq)]
pub struct ProofOfAcceptance<G: Group> {
    pub block: MicroBlock<G>,
    pub signature: CollectiveSignature<G>,
    pub view: u32,
}

impl<G: Group> fmt::Debug for ProofOfAcceptance<G> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "PoA(h={}, {:?}, view {})",
            self.block.header.height,
            self.block.hash(),
            self.view
        )
    }
}

impl<G: Group> ProofOfAcceptance<G> {
    pub fn hash(&self) -> Hash256 {
        self.block.hash()
    }

    pub fn height(&self) -> u64 {
        self.block.header.height
    }

    fn encode(&self, group: &G, w: &mut Writer) {
        self.block.encode(group, w);
        self.signature.encode(group, w);
        w.u32(self.view);
    }

    fn decode(group: &G, r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Self {
            block: MicroBlock::decode(group, r)?,
            signature: CollectiveSignature::decode(group, r)?,
            view: r.u32()?,
        })
    }
}

/// What a validator needs besides the bytes being signed.
#[derive(Clone, PartialEq, Eq)]
pub enum Context<G: Group> {
    /// Prepare: the candidate and, for nodes that missed it, the committed
    /// parent with its commit signature.
    Candidate {
        block: MicroBlock<G>,
        parent: Option<MicroBlock<G>>,
    },
    /// Commit: the prepare certificate.
    Proof(ProofOfAcceptance<G>),
    Keyblock(KeyBlock<G>),
}

impl<G: Group> fmt::Debug for Context<G> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Context::Candidate { block, parent } => write!(
                f,
                "Candidate(h={}, parent={})",
                block.header.height,
                parent.is_some()
            ),
            Context::Proof(p) => write!(f, "{p:?}"),
            Context::Keyblock(kb) => write!(f, "Keyblock(h={})", kb.height),
        }
    }
}

impl<G: Group> Context<G> {
    fn encode(&self, group: &G, w: &mut Writer) {
        match self {
            Context::Candidate { block, parent } => {
                w.u8(1);
                block.encode(group, w);
                encode_opt_block(group, parent.as_ref(), w);
            }
            Context::Proof(p) => {
                w.u8(2);
                p.encode(group, w);
            }
            Context::Keyblock(kb) => {
                w.u8(3);
                kb.encode(group, w);
            }
        }
    }

    fn decode(group: &G, r: &mut Reader<'_>) -> Result<Self, WireError> {
        match r.u8()? {
            1 => Ok(Context::Candidate {
                block: MicroBlock::decode(group, r)?,
                parent: decode_opt_block(group, r)?,
            }),
            2 => Ok(Context::Proof(ProofOfAcceptance::decode(group, r)?)),
            3 => Ok(Context::Keyblock(KeyBlock::decode(group, r)?)),
            tag => Err(WireError::UnknownTag {
                what: "round context",
                tag,
            }),
        }
    }

    /// Declared bytes of synthetic payloads that travel with the message.
    fn synthetic_bytes(&self) -> usize {
        match self {
            Context::Candidate { block, .. } => synthetic_len(block),
            _ => 0,
        }
    }
}

fn synthetic_len<G: Group>(block: &MicroBlock<G>) -> usize {
    match block.payload {
        Payload::Synthetic { bytes, .. } => bytes as usize,
        Payload::Transactions(_) => 0,
    }
}

fn encode_opt_block<G: Group>(group: &G, block: Option<&MicroBlock<G>>, w: &mut Writer) {
    match block {
        None => {
            w.u8(0);
        }
        Some(b) => {
            w.u8(1);
            b.encode(group, w);
        }
    }
}

fn decode_opt_block<G: Group>(group: &G, r: &mut Reader<'_>) -> Result<Option<MicroBlock<G>>, WireError> {
    match r.u8()? {
        0 => Ok(None),
        1 => Ok(Some(MicroBlock::decode(group, r)?)),
        tag => Err(WireError::UnknownTag {
            what: "optional block",
            tag,
        }),
    }
}

fn encode_opt_proof<G: Group>(group: &G, proof: Option<&ProofOfAcceptance<G>>, w: &mut Writer) {
    match proof {
        None => {
            w.u8(0);
        }
        Some(p) => {
            w.u8(1);
            p.encode(group, w);
        }
    }
}

fn decode_opt_proof<G: Group>(
    group: &G,
    r: &mut Reader<'_>,
) -> Result<Option<Arc<ProofOfAcceptance<G>>>, WireError> {
    match r.u8()? {
        0 => Ok(None),
        1 => Ok(Some(Arc::new(ProofOfAcceptance::decode(group, r)?))),
        tag => Err(WireError::UnknownTag {
            what: "optional proof",
            tag,
        }),
    }
}

fn encode_round(id: &RoundId, w: &mut Writer) {
    w.hash(&id.era).u64(id.round);
}

fn decode_tag(r: &mut Reader<'_>) -> Result<RoundTag, WireError> {
    let id = RoundId {
        era: r.hash()?,
        round: r.u64()?,
    };
    RoundTag::from_round_id(id).ok_or(WireError::Invalid("round counter"))
}

/// Consensus-layer messages exchanged between roster members.
#[derive(Clone, PartialEq, Eq)]
pub enum Message<G: Group> {
    /// A CoSi message. Announcements carry their validation context.
    Cosi {
        msg: CosiMessage<G>,
        context: Option<Arc<Context<G>>>,
    },
    /// Sent by the leader directly to every member after a tree announcement.
    Probe { tag: RoundTag, hash: Hash256 },
    /// Reply to a probe once the announced block has arrived.
    Ack { tag: RoundTag, hash: Hash256, accept: bool },
    /// A microblock with its commit signature.
    Committed { block: Arc<MicroBlock<G>> },
    /// The current keyblock with the roster's co-signature.
    SignedKeyblock { block: Arc<KeyBlock<G>> },
    /// Vote to move to `view`. Carries the voter's latest committed block and
    /// the highest prepare certificate it holds above it.
    ViewChange {
        era: Hash256,
        view: u32,
        latest: Option<Arc<MicroBlock<G>>>,
        proof: Option<Arc<ProofOfAcceptance<G>>>,
    },
    CheckpointRequest { era: Hash256, nonce: u64 },
    /// The responder's most recent committed blocks, oldest first.
    CheckpointResponse {
        era: Hash256,
        nonce: u64,
        blocks: Vec<Arc<MicroBlock<G>>>,
        proof: Option<Arc<ProofOfAcceptance<G>>>,
    },
}

impl<G: Group> fmt::Debug for Message<G> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::Cosi { msg, context } => match context {
                Some(c) => write!(f, "Cosi({msg:?}, {c:?})"),
                None => write!(f, "Cosi({msg:?})"),
            },
            Message::Probe { tag, .. } => write!(f, "Probe({tag:?})"),
            Message::Ack { tag, accept, .. } => write!(f, "Ack({tag:?}, {accept})"),
            Message::Committed { block } => write!(f, "Committed(h={})", block.header.height),
            Message::SignedKeyblock { block } => write!(f, "SignedKeyblock(h={})", block.height),
            Message::ViewChange { view, .. } => write!(f, "ViewChange(view {view})"),
            Message::CheckpointRequest { nonce, .. } => write!(f, "CheckpointRequest({nonce})"),
            Message::CheckpointResponse { blocks, .. } => {
                write!(f, "CheckpointResponse({} blocks)", blocks.len())
            }
        }
    }
}

impl<G: Group> Message<G> {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Cosi { msg, .. } => match msg {
                CosiMessage::Announcement { .. } => "announcement",
                CosiMessage::Commitment { .. } => "commitment",
                CosiMessage::Challenge { .. } => "challenge",
                CosiMessage::Response { .. } => "response",
            },
            Message::Probe { .. } => "probe",
            Message::Ack { .. } => "ack",
            Message::Committed { .. } => "committed",
            Message::SignedKeyblock { .. } => "signed-keyblock",
            Message::ViewChange { .. } => "view-change",
            Message::CheckpointRequest { .. } => "checkpoint-request",
            Message::CheckpointResponse { .. } => "checkpoint-response",
        }
    }

    pub fn encode(&self, group: &G, w: &mut Writer) {
        match self {
            Message::Cosi { msg, context } => {
                w.u8(1);
                msg.encode(group, w);
                match context {
                    None => {
                        w.u8(0);
                    }
                    Some(c) => {
                        w.u8(1);
                        c.encode(group, w);
                    }
                }
            }
            Message::Probe { tag, hash } => {
                w.u8(2);
                encode_round(&tag.round_id(), w);
                w.hash(hash);
            }
            Message::Ack { tag, hash, accept } => {
                w.u8(3);
                encode_round(&tag.round_id(), w);
                w.hash(hash).bool(*accept);
            }
            Message::Committed { block } => {
                w.u8(4);
                block.encode(group, w);
            }
            Message::SignedKeyblock { block } => {
                w.u8(5);
                block.encode(group, w);
            }
            Message::ViewChange {
                era,
                view,
                latest,
                proof,
            } => {
                w.u8(6).hash(era).u32(*view);
                encode_opt_block(group, latest.as_deref(), w);
                encode_opt_proof(group, proof.as_deref(), w);
            }
            Message::CheckpointRequest { era, nonce } => {
                w.u8(7).hash(era).u64(*nonce);
            }
            Message::CheckpointResponse {
                era,
                nonce,
                blocks,
                proof,
            } => {
                w.u8(8).hash(era).u64(*nonce).u32(blocks.len() as u32);
                for b in blocks {
                    b.encode(group, w);
                }
                encode_opt_proof(group, proof.as_deref(), w);
            }
        }
    }

    pub fn decode(group: &G, r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(match r.u8()? {
            1 => {
                let msg = CosiMessage::decode(group, r)?;
                if RoundTag::from_round_id(msg.round()).is_none() {
                    return Err(WireError::Invalid("round counter"));
                }
                let context = match r.u8()? {
                    0 => None,
                    1 => Some(Arc::new(Context::decode(group, r)?)),
                    tag => {
                        return Err(WireError::UnknownTag {
                            what: "optional context",
                            tag,
                        })
                    }
                };
                Message::Cosi { msg, context }
            }
            2 => Message::Probe {
                tag: decode_tag(r)?,
                hash: r.hash()?,
            },
            3 => Message::Ack {
                tag: decode_tag(r)?,
                hash: r.hash()?,
                accept: r.bool()?,
            },
            4 => Message::Committed {
                block: Arc::new(MicroBlock::decode(group, r)?),
            },
            5 => Message::SignedKeyblock {
                block: Arc::new(KeyBlock::decode(group, r)?),
            },
            6 => Message::ViewChange {
                era: r.hash()?,
                view: r.u32()?,
                latest: decode_opt_block(group, r)?.map(Arc::new),
                proof: decode_opt_proof(group, r)?,
            },
            7 => Message::CheckpointRequest {
                era: r.hash()?,
                nonce: r.u64()?,
            },
            8 => {
                let era = r.hash()?;
                let nonce = r.u64()?;
                let n = r.u32()? as usize;
                let blocks = (0..n)
                    .map(|_| MicroBlock::decode(group, r).map(Arc::new))
                    .collect::<Result<_, _>>()?;
                Message::CheckpointResponse {
                    era,
                    nonce,
                    blocks,
                    proof: decode_opt_proof(group, r)?,
                }
            }
            tag => {
                return Err(WireError::UnknownTag {
                    what: "consensus message",
                    tag,
                })
            }
        })
    }

    pub fn to_bytes(&self, group: &G) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(group, &mut w);
        w.finish()
    }

    pub fn from_bytes(group: &G, bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let m = Self::decode(group, &mut r)?;
        r.finish()?;
        Ok(m)
    }

    /// Size on the wire. A candidate's synthetic payload counts at its declared
    /// size; everywhere else blocks travel as header plus signature because the
    /// receiver already holds the body.
    pub fn wire_len(&self, group: &G) -> usize {
        let extra = match self {
            Message::Cosi {
                context: Some(c), ..
            } => c.synthetic_bytes(),
            _ => 0,
        };
        self.to_bytes(group).len() + extra
    }
}
