use thiserror::Error;

/// Errors produced by the learning, alignment, adaptation and simulation
/// pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical conditioning failure: {0}")]
    Conditioning(String),

    #[error("hyperparameter optimization failed: {0}")]
    OptimizationFailed(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate trajectory: {0}")]
    DegenerateTrajectory(String),

    #[error("inconsistent constraint: {0}")]
    InconsistentConstraint(String),

    #[error("simulation diverged at step {step}")]
    Divergence { step: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

pub(crate) fn io_error(path: &std::path::Path, e: impl std::fmt::Display) -> Error {
    Error::Io { path: path.display().to_string(), message: e.to_string() }
}
