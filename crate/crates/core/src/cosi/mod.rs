//! Collective signing (CoSi): one aggregate Schnorr signature from a leader
//! and its witnesses, built in four phases over a communication tree.
//!
//! Announcement and challenge travel down the tree; commitments and
//! responses are aggregated on the way up. Witnesses that stay silent or
//! reject the message are recorded in an [`ExceptionMask`] and their keys are
//! divided out of the aggregate key at verification time.

mod driver;
mod round;
mod signature;
mod tree;

use thiserror::Error;

pub use driver::{count_messages, run_round, MessageStats, RoundOutcome, TracedMessage};
pub use round::{
    nonce_for, Action, CosiMessage, CosiPhase, Participant, RoundConfig, RoundId,
};
pub use signature::{
    aggregate_key, verify_aggregate, verify_collective, CollectiveSignature, ExceptionMask,
};
pub use tree::{build_tree, CommTree, DEFAULT_BRANCHING};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CosiError {
    #[error("empty roster")]
    EmptyRoster,
    #[error("branching factor {0} is below 2")]
    InvalidBranching(usize),
    #[error("exception mask covers {got} positions, roster has {expected}")]
    MaskLength { expected: usize, got: usize },
    #[error("signers carry weight {weight}, {required} required ({} excepted)", mask.count())]
    InsufficientParticipation {
        mask: ExceptionMask,
        weight: u64,
        required: u64,
    },
    #[error("responses missing from children {0:?}")]
    MissingResponse(Vec<usize>),
    #[error("aggregate response does not verify")]
    InvalidResponse,
    #[error("the leader is faulty")]
    LeaderFaulty,
    #[error("round stalled with no outstanding work")]
    Stalled,
}
