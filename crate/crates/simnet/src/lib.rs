//! Discrete-event network simulator for the consensus crate.
//!
//! Hosts share one link model: a FIFO uplink per host, a fixed one-way
//! latency, and no downlink limit. Everything is seeded, so a run is a pure
//! function of its [`ScenarioConfig`].

pub mod audit;
pub mod config;
pub mod gossip;
pub mod graph;
pub mod link;
pub mod metrics;
pub mod mining;
pub mod queue;
pub mod scenarios;
pub mod selfish;
pub mod sim;

pub use audit::{audit, AuditReport};
pub use config::{AdversaryConfig, ProfileKind, Quorum, ScenarioConfig, Topology};
pub use link::LinkModel;
pub use metrics::{MetricsReport, TraceRecord};
pub use queue::{Time, MS, SECOND};
pub use selfish::{simulate_selfish, Resolution, SelfishReport};
pub use sim::{MessageFilter, Simulation, G};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("chain: {0}")]
    Chain(#[from] byzcoin_core::chain::ChainError),
}
