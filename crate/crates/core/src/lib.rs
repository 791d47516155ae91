//! Dual-memory online learning for classification streams.
//!
//! Two learners cooperate. The *deep memory* is an ensemble of small
//! feed-forward networks trained chunk-by-chunk over a bounded storage
//! window, with several orchestration methods ranging from independent
//! per-chunk models to a warm-start chain seeded from a continuously
//! trained general model. The *fast memory* is a shallow multiplicative-
//! kernel network over the ensemble's concatenated hidden activations,
//! fitted exactly per instance by recursive least squares, so it absorbs
//! new information in a single pass while the deep memory retrains.
//!
//! The crate is generic over the scalar type (`f32` for the networks,
//! `f64` recommended for the exact least-squares path); the aliases at the
//! root pin the combination used by the command-line harness.

pub mod checkpoint;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod idx;
pub mod kernels;
pub mod mhn;
pub mod mlp;
pub mod rls;
pub mod scalar;
pub mod stream;
pub mod synth;
pub mod window;

pub use checkpoint::{
    deserialize_checkpoint, load_checkpoint, save_checkpoint, serialize_checkpoint,
};
pub use data::{Dataset, LabeledExample, SplitTag};
pub use ensemble::{DeepConfig, EnsembleState, MethodKind, StepOutcome, WeakModel};
pub use error::{Error, Result};
pub use idx::{load_idx, parse_idx, serialize_idx, write_idx};
pub use kernels::{sample_kernels, FeatureBlock, KernelBasis};
pub use mhn::{FastMemoryConfig, MhnModel};
pub use mlp::{transfer_init, LrSchedule, Mlp};
pub use rls::RlsState;
pub use scalar::Scalar;
pub use stream::{
    builtin_drift_mix, builtin_drift_schedule, schedule_classes, split_stationary, split_two,
    ClassMix, ScheduleKind, StreamSchedule,
};
pub use synth::{synth_gaussian, synth_mixture};
pub use window::StorageWindow;

/// Deep-memory state at the precision the harness runs it.
pub type Ensemble32 = EnsembleState<f32>;
/// Fast-memory model at the precision the harness runs it.
pub type FastMemory64 = MhnModel<f64>;
/// Network aliases for the two supported widths.
pub type Mlp32 = Mlp<f32>;
pub type Mlp64 = Mlp<f64>;
