//! Dedicated error types for the sepmap library.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum SepmapError {
    /// A matrix violated the Hermiticity contract beyond tolerance.
    #[error("matrix is not Hermitian: max deviation {max_dev:.3e} exceeds tolerance {tol:.3e}")]
    NotHermitian { max_dev: f64, tol: f64 },

    /// A square matrix was required.
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    /// Subsystem or operator dimensions do not line up.
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    /// A positive-semidefinite matrix was required.
    #[error("matrix is not positive semidefinite: lambda_min = {lambda_min:.6e} (tolerance {tol:.3e})")]
    NotPositiveSemidefinite { lambda_min: f64, tol: f64 },

    /// A mathematical domain restriction was violated (e.g. fractional power
    /// of a matrix with a genuinely negative eigenvalue).
    #[error("domain error in {op}: {reason}")]
    Domain { op: &'static str, reason: String },

    /// An argument fell outside its documented range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A documented operation precondition failed.
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// Matrix file / config parsing failure.
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, SepmapError>;
