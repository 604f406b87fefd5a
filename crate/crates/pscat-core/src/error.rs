//! Error types shared across the toolkit.

use alloc::string::String;
use num_complex::Complex64;
use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// det(P^-1) is numerically zero at the requested energy: the closed-form
    /// resolvent is only valid where the matrix is invertible.
    #[error("near resonance at z = {z:?}: |det P^-1| = {det_abs:.3e} (relative {det_rel:.3e})")]
    NearResonance {
        z: Complex64,
        det_abs: f64,
        det_rel: f64,
    },

    /// A matrix required to be Hermitian is not, within tolerance.
    #[error("matrix is not Hermitian: defect norm {defect:.3e} exceeds {tolerance:.1e}")]
    NotHermitian { defect: f64, tolerance: f64 },

    /// An eigenvalue of theta falls on (or too close to) the excluded set
    /// {(1/2 + m) pi}, where the extension degenerates.
    #[error("theta eigenvalue {eigenvalue} within {distance:.3e} of the excluded set (1/2 + m)*pi")]
    EigenvalueExcluded { eigenvalue: f64, distance: f64 },

    /// The plane-data grid does not cover the region a lift needs.
    #[error("insufficient grid coverage: {0}")]
    Coverage(String),

    /// The linear stage of a fit is rank deficient.
    #[error("rank-deficient linear system: deficient columns {columns:?} (entries of P, row-major)")]
    RankDeficient { columns: alloc::vec::Vec<usize> },

    /// A file payload or schema constraint was violated (surfaced by callers
    /// that construct core types from external data).
    #[error("validation error: {0}")]
    Validation(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
