//! Error type shared across the library.

use thiserror::Error;

/// Errors produced by chart evaluation, integration and linear algebra.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A point failed a chart's domain predicate.
    #[error("point outside chart domain of `{chart}`: {detail}")]
    DomainExit { chart: String, detail: String },

    /// Mismatched or invalid dimensions.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An input contained NaN or infinity.
    #[error("non-finite input: {0}")]
    NonFinite(String),

    /// A matrix expected to be skew-symmetric was not.
    #[error("matrix is not skew-symmetric (residual {residual:e})")]
    NotSkew { residual: f64 },

    /// Orthogonality drift too large for a safe retraction.
    #[error("constraint drift {drift:e} exceeds limit {limit:e}; integration step is unreliable")]
    DriftTooLarge { drift: f64, limit: f64 },

    /// Negative or zero determinant where a rotation was expected.
    #[error("determinant {det:e} is not positive")]
    BadDeterminant { det: f64 },

    /// Flag ranks disagree across finite-difference steps.
    #[error("rank-unstable: ranks {a:?} at h={ha:e} vs {b:?} at h={hb:e}")]
    RankUnstable {
        a: Vec<usize>,
        b: Vec<usize>,
        ha: f64,
        hb: f64,
    },

    /// Flag did not stabilize within the allowed number of levels.
    #[error("flag did not stabilize within {max_step} levels (ranks so far {ranks:?})")]
    NoStabilization { max_step: usize, ranks: Vec<usize> },

    /// Ambient data (embedding / normal frame) required but absent.
    #[error("chart `{0}` has no ambient data")]
    MissingAmbient(String),

    /// Anything else: malformed scenarios, bad controls, unusable arguments.
    #[error("{0}")]
    BadInput(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, CoreError>;
