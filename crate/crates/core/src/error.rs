//! Crate-wide error type.

/// Error type for all fallible operations in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An op received tensors whose shapes do not conform.
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// `backward` was called on a tensor with more than one element.
    #[error("backward root must be a scalar, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },

    /// An index list referenced an element outside its source tensor.
    #[error("{op}: index {index} out of range for length {len}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },

    /// A pattern string violated one of its structural rules.
    #[error("invalid pattern: {reason}")]
    InvalidPattern { reason: String },

    /// `source_layer` was asked for the source of a layer that computes
    /// its own indices.
    #[error("layer {layer} is an F layer and has no source layer")]
    NotSharedLayer { layer: usize },

    /// A probability vector failed its normalization check.
    #[error("distribution row {row} sums to {sum:.12}, expected 1 within {tol:e}")]
    NotNormalized { row: usize, sum: f64, tol: f64 },

    /// A configuration value violated an invariant.
    #[error("invalid config: {reason}")]
    InvalidConfig { reason: String },

    /// Training produced a non-finite loss.
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    /// A search target (S count, F count, block count) is out of range.
    #[error("search target out of range: {reason}")]
    BadSearchTarget { reason: String },

    /// Brute-force enumeration would exceed its safety guard.
    #[error("enumeration guard exceeded: {candidates} candidates > {limit}")]
    EnumerationGuard { candidates: u128, limit: u128 },

    /// A checkpoint file was malformed or version-incompatible.
    #[error("checkpoint format error: {reason}")]
    BadCheckpoint { reason: String },

    /// A dataset file was malformed.
    #[error("dataset format error: {reason}")]
    BadDataset { reason: String },

    /// An operation that needs at least one record received none.
    #[error("empty input: {what}")]
    EmptyInput { what: &'static str },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
