//! Shared error type for the whole crate.

use thiserror::Error;

use crate::pomdp::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    /// The model violates one or more structural invariants.
    #[error("model validation failed:\n{0}")]
    Invalid(ValidationReport),

    /// Syntax error while reading a POMDP text file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// The file parsed but its contents are inconsistent.
    #[error("semantic error at line {line}: {msg}")]
    Semantic { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Corrupt, truncated or incompatible artifact file.
    #[error("artifact error: {0}")]
    Artifact(String),

    #[error("dimension mismatch: {0}")]
    Dim(String),

    /// Pr(z | a, b) is numerically zero; the caller decides whether to
    /// resample the observation or abort.
    #[error("impossible observation: Pr(z={obs} | a={action}, b) = 0")]
    ImpossibleObservation { action: usize, obs: usize },

    #[error("rank-deficient matrix: {0}")]
    RankDeficient(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
