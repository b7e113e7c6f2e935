//! Error types shared across the crate.

use thiserror::Error;

/// Identifies which covariance block a solver failure refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    X,
    Y,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::X => write!(f, "X"),
            Side::Y => write!(f, "Y"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{what} contains a non-finite value")]
    NonFinite { what: &'static str },

    #[error("sample must contain at least {min} observations, found {found}")]
    TooFewSamples { min: usize, found: usize },

    #[error("invalid MT-function spec: {reason}")]
    InvalidSpec { reason: String },

    #[error(
        "degenerate transform weights: one sample carries {max_share:.6} of the total mass"
    )]
    DegenerateWeights { max_share: f64 },

    #[error("covariance matrix of {side} is numerically singular (min eigenvalue {min_eig:.3e})")]
    SingularCovariance { side: Side, min_eig: f64 },

    #[error("coordinate {index} of {side} has zero variance")]
    ZeroVariance { side: Side, index: usize },

    #[error("alignment is undefined for a zero vector")]
    ZeroVector,

    #[error("graphs are defined over different node sets")]
    NodeSetMismatch,

    #[error("permutation null is degenerate: {failures}/{total} permutations failed")]
    DegenerateNull { failures: usize, total: usize },

    #[error("{failures}/{total} Monte-Carlo trials failed")]
    TooManyTrialFailures { failures: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
