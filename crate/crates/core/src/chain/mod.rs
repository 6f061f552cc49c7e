//! The two parallel chains: proof-of-work keyblocks that elect leaders and
//! credit membership shares, and collectively signed microblocks that carry
//! transactions.

mod blocks;
mod fork;
mod reward;
mod state;
mod window;

use thiserror::Error;

use crate::hash::Hash256;

pub use blocks::{signing_message, KeyBlock, MicroBlock, MicroHeader, NodeId, Payload, SignedKind};
pub use fork::{fork_index, resolve_fork, resolve_fork_hashes};
pub use reward::{split_reward, RewardSplit};
pub use state::{
    dump_jsonl, load_jsonl, validate_microblock, validate_unsigned, Block, ChainRecord, ChainState,
    DumpError, Violation,
};
pub use window::{
    commit_quorum, era_first_quorum, fault_bound, update_window, voting_power, Member, Roster,
    Share, ShareWindow,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("keyblock extends {got:?}, tip is {expected:?}")]
    DoesNotExtend { expected: Hash256, got: Hash256 },
    #[error("keyblock height {got}, expected {expected}")]
    WrongHeight { expected: u64, got: u64 },
    #[error("proof-of-work below the declared difficulty")]
    InvalidProofOfWork,
    #[error("genesis keyblock must have height 0 and a zero parent")]
    BadGenesis,
    #[error("no fork candidates")]
    NoCandidates,
}
