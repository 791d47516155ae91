//! Crate-wide error type.
//!
//! Contract violations that indicate caller bugs on hot inner paths (shape
//! mismatches inside a tight training loop) are `debug_assert!`ed where noted;
//! everything that can be triggered by data, files, or configuration surfaces
//! here as a variant.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector or matrix had the wrong length for the operation.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Network architecture lists fewer than two layer widths or a zero width.
    #[error("invalid architecture {dims:?}: need at least two non-zero layer widths")]
    InvalidArchitecture { dims: Vec<usize> },

    /// An operation that needs data received none.
    #[error("empty input in {context}")]
    EmptyInput { context: &'static str },

    /// A gradient or feature vector contained NaN or infinity.
    #[error("non-finite values in {context}: training diverged or inputs are corrupt")]
    NonFinite { context: &'static str },

    /// Learning-rate schedule evaluated at a nonsensical point or built with
    /// degenerate parameters.
    #[error("invalid schedule use: {reason}")]
    InvalidSchedule { reason: String },

    /// More examples pushed at once than the window can ever hold.
    #[error("push of {pushed} examples exceeds window capacity {capacity}")]
    WindowOverflow { pushed: usize, capacity: usize },

    /// Prediction requested before any model exists.
    #[error("no trained model available for {context}")]
    NoModel { context: &'static str },

    /// A label was at or above the configured class count.
    #[error("label {label} out of range for {class_count} classes")]
    LabelOutOfRange { label: u32, class_count: usize },

    /// Keep-count or keep-fraction that would empty the model.
    #[error("degenerate retention in {context}: {reason}")]
    DegenerateRetention {
        context: &'static str,
        reason: String,
    },

    /// Kernel sampling asked for more distinct indices than exist.
    #[error("kernel order {order} exceeds feature dimension {feature_dim}")]
    KernelOrderTooLarge { order: usize, feature_dim: usize },

    /// Stream split parameters out of range.
    #[error("invalid split: {reason}")]
    InvalidSplit { reason: String },

    /// A class schedule assigns more than 100% of some class.
    #[error("class {class} over-allocated: fractions sum to {total}")]
    OverAllocatedClass { class: u32, total: f64 },

    /// File had the wrong magic number for its format.
    #[error("{path}: bad magic {got:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        got: u32,
        expected: u32,
    },

    /// File ended before its header-declared payload.
    #[error("{path}: truncated or malformed: {reason}")]
    MalformedFile { path: PathBuf, reason: String },

    /// Image and label files disagree on example count.
    #[error("example count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    /// Serialized state failed structural validation on load.
    #[error("corrupt checkpoint: {reason}")]
    CorruptCheckpoint { reason: String },

    /// Unsupported serialization format version.
    #[error("unsupported checkpoint version {got} (supported: {supported})")]
    UnsupportedVersion { got: u32, supported: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
