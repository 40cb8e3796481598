//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the density-estimation and transfer pipeline.
#[derive(Debug, Error)]
pub enum KrdaError {
    /// A vector or matrix did not have the expected dimension.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Mixture parameters violate their invariants (weights, stds, N).
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    /// No exponent k <= 64 produced a sign change of F(z) - q over
    /// [-2^k, 2^k]; the mixture parameters are pathological.
    #[error("no bisection bracket found for quantile {q} (k searched up to 64)")]
    BracketNotFound { q: f64 },

    /// A gradient entry came out non-finite; training has diverged.
    #[error("non-finite gradient in {block} at index {index}")]
    NonFiniteGradient { block: &'static str, index: usize },

    /// An operation that needs rows received none.
    #[error("empty dataset in {0}")]
    EmptyDataset(&'static str),

    /// Classifier training needs both classes present.
    #[error("training data contains a single class")]
    SingleClassData,

    /// A CSV cell could not be parsed.
    #[error("parse error at row {row}, column {column}: {message}")]
    ParseError {
        row: usize,
        column: String,
        message: String,
    },

    /// A CSV cell parsed to a non-finite float.
    #[error("non-finite value at row {row}, column {column}")]
    NonFiniteValue { row: usize, column: String },

    /// Invalid configuration value.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, KrdaError>;
