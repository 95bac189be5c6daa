//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Mismatched or empty dimensions (vector lengths, matrix shapes, group counts).
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    /// A group has too few observations for the requested computation.
    #[error("group {group} has {n} observations, need at least {min}")]
    SampleTooSmall { group: usize, n: usize, min: usize },

    /// A matrix that must have full rank (or strictly positive eigenvalues) does not.
    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    /// An argument violates a value-level contract (non-PSD matrix, bad tuning value, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A simulation configuration is inconsistent; reported before any replicate runs.
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
