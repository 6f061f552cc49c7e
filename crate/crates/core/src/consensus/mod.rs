//! Per-node consensus: a leader drives two CoSi rounds per microblock
//! (prepare, then commit over the prepare certificate), members lock on what
//! they sign, and a view change replaces a leader that stalls.

mod messages;
mod node;
mod rules;

pub use messages::{Context, Message, ProofOfAcceptance, RoundKind, RoundTag};
pub use node::{Behavior, Event, Input, Node, NodeConfig, Output, Time, Timer, Timing};
pub use rules::{era_first_block_rule, QuorumRule};
