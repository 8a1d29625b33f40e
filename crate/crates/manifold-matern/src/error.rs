//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A series could not be certified to the requested accuracy within the
    /// term budget. Carries the bound that was achieved so callers can decide
    /// whether a looser target would do.
    #[error("truncation failure after {terms} terms: achieved bound {achieved:.3e}, target {target:.3e}")]
    TruncationFailure { terms: u64, achieved: f64, target: f64 },

    #[error("eigenvalue level {level} outside the supplied spectrum (max level {max_level})")]
    LevelOutOfRange { level: u64, max_level: u64 },

    #[error("no pointwise addition kernel on this manifold; only spectral-density operations are available")]
    NoAdditionKernel,

    #[error("point does not belong to the requested manifold")]
    ManifoldMismatch,

    #[error("covariance factorization failed after jitter escalation (last tried {last_jitter:.3e})")]
    FactorizationFailure { last_jitter: f64 },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("equivalence checks need a common smoothness; got nu1={nu1}, nu2={nu2}")]
    SmoothnessMismatch { nu1: f64, nu2: f64 },

    /// Signal, not failure: the two densities agree exactly on the whole
    /// fitted range, so no tail exponent can be estimated.
    #[error("densities agree exactly on the fitted range; no tail exponent")]
    ExactlyEqualDensities,

    #[error("parse: {0}")]
    Parse(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
