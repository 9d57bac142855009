//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A trace skipped one or more rounds; holds the first missing round.
    #[error("gap in trace rounds: missing round {0}")]
    Gap(i64),
    /// Malformed trace input (bad header, non-integer count, negative count, empty).
    #[error("invalid trace format: {0}")]
    Format(String),
    /// A window or round fell outside the data available to the caller.
    #[error("out of range: {0}")]
    Range(String),
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The observed chain is so unlikely under the configured production rate
    /// that conditioning on it is numerically meaningless.
    #[error(
        "degenerate condition: P(T >= {chain_blocks}) over {window_rounds} round(s) is below the \
         early-stop floor; trace inconsistent with configured blocks-per-round target"
    )]
    DegenerateCondition {
        window_rounds: u64,
        chain_blocks: u64,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
