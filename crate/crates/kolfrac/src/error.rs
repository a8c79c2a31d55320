//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the operator, semigroup and quadrature layers.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "hypoellipticity violation at t = {t}: min eigenvalue of K(t) is {min_eig:.3e} \
         (max eigenvalue {max_eig:.3e})"
    )]
    HypoellipticityViolation { t: f64, min_eig: f64, max_eig: f64 },

    #[error("matrix is not symmetric positive definite (pivot {pivot})")]
    NotSpd { pivot: usize },

    #[error("unsupported function kind: {0}")]
    UnsupportedKind(String),

    #[error("unsupported dimension {n}: {reason}")]
    UnsupportedDimension { n: usize, reason: String },

    #[error("quadrature did not converge: {0}")]
    NonConvergence(String),

    #[error("function range leaves the interval of the nonlinearity: u = {value} not in [{lo}, {hi}]")]
    RangeViolation { value: f64, lo: f64, hi: f64 },

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
