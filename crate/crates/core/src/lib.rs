//! Dynamic upper bounds on the probability that a past tipset of a
//! tipset-based longest-chain blockchain gets reorganized out of the
//! canonical chain.
//!
//! Given only the per-round block counts of the observed heaviest chain, the
//! crate bounds the reorganization probability of a target round from two
//! vantage points: a full node that sees every fork carrying an honest block
//! ([`node`]), and an on-chain contract that sees nothing outside its own
//! chain ([`actor`]). Supporting modules provide the discrete-probability
//! kernel ([`prob`]), trace ingestion and configuration ([`chain`]),
//! synthetic trace generation ([`sim`]), and independent validation oracles
//! ([`oracle`]).

pub mod actor;
pub mod chain;
pub mod error;
pub mod node;
pub mod oracle;
pub mod prob;
pub mod sim;

pub use chain::{
    parse_trace, ChainTrace, FinalityReport, NetworkParams, ReportEntry, TraceFormat,
    TruncationConfig, View,
};
pub use error::{Error, Result};
pub use prob::Pmf;
