//! Experiment harness for the dual-memory stream learner: configuration
//! files, the prequential run loop, metrics persistence, and evaluation of
//! saved checkpoints. The `dualmem` binary is a thin CLI over this library.

pub mod config;
pub mod metrics;
pub mod runner;

pub use config::{DatasetSpec, ExperimentConfig, FastSpec, StorageMode};
pub use metrics::{read_metrics, validate_series, MetricsRecord, MetricsWriter};
pub use runner::{
    eval_checkpoint, evaluate, feature_concat, gen_stream, prepare_dataset, resolve_test_pair,
    run_experiment, run_experiment_with, EvalReport, FastChunkTiming, RunOutput, RunPaths,
    TimingReport,
};
