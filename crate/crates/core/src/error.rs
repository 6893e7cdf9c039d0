//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used by every fallible function in the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent with others.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// The experiment config file could not be parsed.
    #[error("config parse error at line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },

    /// The communication graph is unusable (disconnected, self loops, ...).
    #[error("degenerate topology: {0}")]
    DegenerateTopology(String),

    /// Two containers that must agree in size do not.
    #[error("shape mismatch for {what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An internal consistency check failed; indicates a bug in the caller.
    #[error("internal inconsistency: {0}")]
    Internal(String),

    /// A transmit block exceeds the per-block power budget.
    #[error("agent {agent} transmit power {power} exceeds budget {budget}")]
    PowerViolation {
        agent: usize,
        power: f64,
        budget: f64,
    },

    /// The channel was driven outside its one-block-per-agent-per-round use.
    #[error("channel protocol violation: {0}")]
    Protocol(String),

    /// A local gradient evaluated to NaN or infinity.
    #[error("non-finite gradient at agent {agent}, round {round}")]
    NonFiniteGradient { agent: usize, round: usize },

    /// An iterate norm ran away, usually a step size far too large.
    #[error("chain diverged at agent {agent}, round {round} (|theta| = {norm:.3e})")]
    Divergence {
        agent: usize,
        round: usize,
        norm: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
