//! Error type shared across the crate.

use thiserror::Error;

/// Errors surfaced by data loading, model evaluation and fitting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A pedigree CSV row that could not be parsed; names the offending
    /// line (1-based, counting the header) and column.
    #[error("parse error at line {line}, column `{column}`: {message}")]
    Parse {
        line: usize,
        column: String,
        message: String,
    },

    /// Structurally valid input that violates a model or data invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Adaptive quadrature failed to converge on a segment.
    #[error("quadrature did not converge on [{lo}, {hi}]: {detail}")]
    Quadrature { lo: f64, hi: f64, detail: String },

    /// A likelihood or penetrance evaluation produced a non-finite value.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// Affected-proband ascertainment probability is zero (all cumulative
    /// hazards vanish at the exam age).
    #[error("degenerate ascertainment for family {fam_id}: P(T <= exam age) = 0")]
    DegenerateAscertainment { fam_id: u64 },

    /// Observed information matrix is numerically singular.
    #[error("singular information matrix; near-null directions: {directions}")]
    SingularInformation { directions: String },

    /// Inverse-transform root solve for a survival time failed.
    #[error("root finding failed: {0}")]
    RootFind(String),

    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
