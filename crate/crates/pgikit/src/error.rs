//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter is out of its documented range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input data violates a structural requirement (inconsistent ids,
    /// non-finite coordinates, mismatched provenance).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A source contained no points.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Text parse failure with a 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Binary or structured file does not match its format.
    #[error("format error: {0}")]
    Format(String),

    /// A training loss became non-finite.
    #[error("training diverged at step {step}")]
    TrainingDiverged { step: usize },

    /// The assignment solver hit its bid cap without completing a phase.
    #[error("assignment solver stalled after {bids} bids")]
    SolverStalled { bids: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
