//! Closed-form security calculations: double-spend probability under
//! confirmation depth, safety of a randomly sampled share window, and the
//! revenue of block withholding under smallest-hash fork resolution.

mod doublespend;
mod membership;
mod selfish;

use thiserror::Error;

pub use doublespend::{double_spend_probability, required_wait, DoubleSpend};
pub use membership::{
    binomial_cdf, membership_safety, published_table, truncate, TableCell, PUBLISHED_TABLE,
    TABLE_PROBABILITIES, TABLE_WINDOWS,
};
pub use selfish::{coefficients, fixed_point_residual, selfish_mining_gain, SelfishGain};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("{name} = {value} outside {expected}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("no confirmation depth suffices against q = {q}")]
    Unattainable { q: f64 },
    #[error("fixed point diverges (nonpositive denominator)")]
    Diverges,
}
