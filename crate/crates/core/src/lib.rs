//! Protocol core for a ByzCoin laboratory: group arithmetic and Schnorr
//! signatures, collective signing over a communication tree, the
//! keyblock/microblock chains with share-window membership, the per-node
//! consensus state machine, and closed-form security analysis.

pub mod analysis;
pub mod chain;
pub mod consensus;
pub mod cosi;
pub mod crypto;
pub mod hash;
pub mod wire;

pub use hash::Hash256;
