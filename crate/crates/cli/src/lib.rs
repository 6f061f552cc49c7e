//! Library half of `byzcoin-lab`, so integration tests can drive the same
//! code paths as the binary.

pub mod analyze;
pub mod run;
pub mod table;

use byzcoin_core::analysis::AnalysisError;
use byzcoin_simnet::SimError;

/// Environment variable read for the log filter.
pub const LOG_ENV: &str = "BYZCOIN_LAB_LOG";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}
