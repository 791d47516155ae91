//! Experiment configuration: a documented TOML file parsed strictly (unknown
//! keys are errors) and resolved into a validated, runnable form.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use dualmem::{
    builtin_drift_schedule, ClassMix, DeepConfig, FastMemoryConfig, LrSchedule, MethodKind,
    StreamSchedule,
};

/// Where the train/test datasets come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    /// Gaussian mixture drawn once (train and test share cluster centers),
    /// affinely mapped to [0, 1] and quantized to 256 levels so it writes to
    /// the same image container format as real data.
    Synthetic {
        classes: usize,
        modes_per_class: usize,
        dim: usize,
        train_per_class: usize,
        test_per_class: usize,
        separation: f64,
        seed: u64,
    },
    /// IDX image/label pairs on disk (the MNIST container format).
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        truncate_train: Option<usize>,
        truncate_test: Option<usize>,
    },
}

/// What the fast memory refits over at each expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageMode {
    /// Every example seen so far (the default; lets the fast memory recover
    /// classes the deep window has already evicted).
    AllSeen,
    /// Only the deep memory's sliding window.
    Window,
}

/// Fast-memory settings when enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct FastSpec {
    pub memory: FastMemoryConfig,
    pub storage: StorageMode,
}

/// A fully validated experiment: everything `run_experiment` needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub schedule: StreamSchedule,
    pub method: MethodKind,
    /// Hidden layer widths; the input and class dims come from the dataset.
    pub hidden: Vec<usize>,
    pub weak_epochs: usize,
    pub batch_size: usize,
    pub momentum: f32,
    pub chunk_schedule: LrSchedule<f32>,
    pub online_rate: f32,
    pub n_subset: usize,
    pub n_new: usize,
    pub fast: Option<FastSpec>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub eval_every_instance: bool,
}

impl ExperimentConfig {
    /// Reads and resolves a TOML config file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        Self::from_toml_str(&text)
            .with_context(|| format!("invalid config file {}", path.display()))
    }

    /// Parses and validates a TOML config document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: FileConfig = toml::from_str(text)?;
        file.resolve()
    }

    /// Network shape for a dataset with the given dimensions.
    pub fn layer_dims(&self, feature_dim: usize, class_count: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(feature_dim);
        dims.extend_from_slice(&self.hidden);
        dims.push(class_count);
        dims
    }

    /// Deep-memory hyperparameters for a dataset with the given dimensions.
    pub fn deep_config(&self, feature_dim: usize, class_count: usize) -> DeepConfig<f32> {
        DeepConfig {
            layer_dims: self.layer_dims(feature_dim, class_count),
            chunk_schedule: self.chunk_schedule.clone(),
            online_rate_base: self.online_rate,
            momentum: self.momentum,
            batch_size: self.batch_size,
            weak_epochs: self.weak_epochs,
            n_subset: self.n_subset,
            n_new: self.n_new,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    dataset: DatasetTable,
    stream: StreamTable,
    method: MethodTable,
    net: NetTable,
    fast_memory: Option<FastTable>,
    run: RunTable,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetTable {
    source: String,
    // synthetic
    classes: Option<usize>,
    modes_per_class: Option<usize>,
    dim: Option<usize>,
    train_per_class: Option<usize>,
    test_per_class: Option<usize>,
    separation: Option<f64>,
    seed: Option<u64>,
    // idx
    train_images: Option<PathBuf>,
    train_labels: Option<PathBuf>,
    test_images: Option<PathBuf>,
    test_labels: Option<PathBuf>,
    truncate_train: Option<usize>,
    truncate_test: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StreamTable {
    kind: String,
    chunks: Option<usize>,
    proportion: Option<f64>,
    mix: Option<Vec<Vec<(u32, f64)>>>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MethodTable {
    name: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetTable {
    hidden: Vec<usize>,
    weak_epochs: usize,
    batch_size: usize,
    momentum: f32,
    chunk_rate: f32,
    chunk_rate_decay_factor: Option<f32>,
    chunk_rate_drops: Option<Vec<usize>>,
    online_rate: f32,
    n_subset: usize,
    n_new: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FastTable {
    enabled: bool,
    kernel_order: Option<usize>,
    kernels_per_block: Option<usize>,
    keep_fraction: Option<f64>,
    storage: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunTable {
    seed: u64,
    out_dir: PathBuf,
    eval_every_instance: Option<bool>,
}

impl FileConfig {
    fn resolve(self) -> Result<ExperimentConfig> {
        let run_seed = self.run.seed;
        let dataset = self.dataset.resolve(run_seed)?;
        let schedule = self.stream.resolve(run_seed)?;
        let method = MethodKind::from_str(&self.method.name)
            .map_err(|e| anyhow::anyhow!("[method] {e}"))?;

        let net = &self.net;
        if !(net.chunk_rate.is_finite() && net.chunk_rate > 0.0) {
            bail!("[net] chunk_rate must be positive, got {}", net.chunk_rate);
        }
        if !(net.online_rate.is_finite() && net.online_rate > 0.0) {
            bail!("[net] online_rate must be positive, got {}", net.online_rate);
        }
        if !(0.0..1.0).contains(&net.momentum) {
            bail!("[net] momentum must be in [0, 1), got {}", net.momentum);
        }
        if net.batch_size == 0 {
            bail!("[net] batch_size must be positive");
        }
        if net.n_subset == 0 || net.n_new == 0 {
            bail!("[net] n_subset and n_new must be positive");
        }
        if method.slides() && net.n_subset % net.n_new != 0 {
            bail!(
                "[net] n_new {} must divide n_subset {} for sliding method {}",
                net.n_new,
                net.n_subset,
                method
            );
        }
        let chunk_schedule = match (&net.chunk_rate_decay_factor, &net.chunk_rate_drops) {
            (None, None) => LrSchedule::step_decay(net.chunk_rate, 2.0, Vec::new())?,
            (Some(f), Some(d)) => LrSchedule::step_decay(net.chunk_rate, *f, d.clone())?,
            _ => bail!(
                "[net] chunk_rate_decay_factor and chunk_rate_drops must be given together"
            ),
        };

        let fast = match self.fast_memory {
            None => None,
            Some(t) if !t.enabled => None,
            Some(t) => {
                if !method.is_ensemble() {
                    bail!(
                        "[fast_memory] requires an ensemble method (feature blocks are keyed \
                         by retained weak models), got {method}"
                    );
                }
                let defaults = FastMemoryConfig::default();
                let keep = t.keep_fraction.unwrap_or(defaults.keep_fraction);
                if !(keep > 0.0 && keep <= 1.0) {
                    bail!("[fast_memory] keep_fraction must be in (0, 1], got {keep}");
                }
                let order = t.kernel_order.unwrap_or(defaults.kernel_order);
                if order == 0 {
                    bail!("[fast_memory] kernel_order must be at least 1");
                }
                let storage = match t.storage.as_deref() {
                    None | Some("all-seen") => StorageMode::AllSeen,
                    Some("window") => StorageMode::Window,
                    Some(other) => {
                        bail!("[fast_memory] unknown storage {other:?}; expected \"all-seen\" or \"window\"")
                    }
                };
                Some(FastSpec {
                    memory: FastMemoryConfig {
                        kernel_order: order,
                        kernels_per_block: t.kernels_per_block,
                        keep_fraction: keep,
                    },
                    storage,
                })
            }
        };

        // Early class-compatibility check when the class count is known now.
        if let DatasetSpec::Synthetic { classes, .. } = &dataset {
            if let Some(max_class) = schedule_max_class(&schedule) {
                if max_class as usize >= *classes {
                    bail!(
                        "[stream] schedule references class {max_class} but the dataset has \
                         only {classes} classes"
                    );
                }
            }
        }

        Ok(ExperimentConfig {
            dataset,
            schedule,
            method,
            hidden: net.hidden.clone(),
            weak_epochs: net.weak_epochs,
            batch_size: net.batch_size,
            momentum: net.momentum,
            chunk_schedule,
            online_rate: net.online_rate,
            n_subset: net.n_subset,
            n_new: net.n_new,
            fast,
            seed: run_seed,
            out_dir: self.run.out_dir,
            eval_every_instance: self.run.eval_every_instance.unwrap_or(false),
        })
    }
}

fn schedule_max_class(schedule: &StreamSchedule) -> Option<u32> {
    match &schedule.kind {
        dualmem::ScheduleKind::ClassSchedule { mix } => {
            mix.iter().flatten().map(|&(c, _)| c).max()
        }
        _ => None,
    }
}

impl DatasetTable {
    fn resolve(self, run_seed: u64) -> Result<DatasetSpec> {
        match self.source.as_str() {
            "synthetic" => {
                for (name, present) in [
                    ("train_images", self.train_images.is_some()),
                    ("train_labels", self.train_labels.is_some()),
                    ("test_images", self.test_images.is_some()),
                    ("test_labels", self.test_labels.is_some()),
                    ("truncate_train", self.truncate_train.is_some()),
                    ("truncate_test", self.truncate_test.is_some()),
                ] {
                    if present {
                        bail!("[dataset] {name} does not apply to source = \"synthetic\"");
                    }
                }
                let need = |v: Option<usize>, name: &str| {
                    v.with_context(|| format!("[dataset] {name} is required for source = \"synthetic\""))
                };
                let classes = need(self.classes, "classes")?;
                let modes = need(self.modes_per_class, "modes_per_class")?;
                let dim = need(self.dim, "dim")?;
                let train = need(self.train_per_class, "train_per_class")?;
                let test = need(self.test_per_class, "test_per_class")?;
                let separation = self
                    .separation
                    .context("[dataset] separation is required for source = \"synthetic\"")?;
                if classes < 2 {
                    bail!("[dataset] classes must be at least 2");
                }
                if modes == 0 || train == 0 || test == 0 {
                    bail!("[dataset] modes_per_class, train_per_class and test_per_class must be positive");
                }
                if !(separation.is_finite() && separation > 0.0) {
                    bail!("[dataset] separation must be positive, got {separation}");
                }
                Ok(DatasetSpec::Synthetic {
                    classes,
                    modes_per_class: modes,
                    dim,
                    train_per_class: train,
                    test_per_class: test,
                    separation,
                    seed: self.seed.unwrap_or(run_seed),
                })
            }
            "idx" => {
                for (name, present) in [
                    ("classes", self.classes.is_some()),
                    ("modes_per_class", self.modes_per_class.is_some()),
                    ("dim", self.dim.is_some()),
                    ("train_per_class", self.train_per_class.is_some()),
                    ("test_per_class", self.test_per_class.is_some()),
                    ("separation", self.separation.is_some()),
                    ("seed", self.seed.is_some()),
                ] {
                    if present {
                        bail!("[dataset] {name} does not apply to source = \"idx\"");
                    }
                }
                let need = |v: Option<PathBuf>, name: &str| {
                    v.with_context(|| format!("[dataset] {name} is required for source = \"idx\""))
                };
                Ok(DatasetSpec::Idx {
                    train_images: need(self.train_images, "train_images")?,
                    train_labels: need(self.train_labels, "train_labels")?,
                    test_images: need(self.test_images, "test_images")?,
                    test_labels: need(self.test_labels, "test_labels")?,
                    truncate_train: self.truncate_train,
                    truncate_test: self.truncate_test,
                })
            }
            other => bail!("[dataset] unknown source {other:?}; expected \"synthetic\" or \"idx\""),
        }
    }
}

impl StreamTable {
    fn resolve(self, run_seed: u64) -> Result<StreamSchedule> {
        let seed = self.seed.unwrap_or(run_seed);
        let forbid = |cond: bool, name: &str, kind: &str| -> Result<()> {
            if cond {
                bail!("[stream] {name} does not apply to kind = {kind:?}");
            }
            Ok(())
        };
        match self.kind.as_str() {
            "stationary" => {
                forbid(self.proportion.is_some(), "proportion", "stationary")?;
                forbid(self.mix.is_some(), "mix", "stationary")?;
                let chunks = self
                    .chunks
                    .context("[stream] chunks is required for kind = \"stationary\"")?;
                Ok(StreamSchedule::stationary(chunks, seed))
            }
            "two" => {
                forbid(self.chunks.is_some(), "chunks", "two")?;
                forbid(self.mix.is_some(), "mix", "two")?;
                let p = self
                    .proportion
                    .context("[stream] proportion is required for kind = \"two\"")?;
                Ok(StreamSchedule::two(p, seed))
            }
            "class-schedule" => {
                forbid(self.chunks.is_some(), "chunks", "class-schedule")?;
                forbid(self.proportion.is_some(), "proportion", "class-schedule")?;
                let mix: ClassMix = self
                    .mix
                    .context("[stream] mix is required for kind = \"class-schedule\"")?;
                if mix.is_empty() {
                    bail!("[stream] mix must list at least one chunk");
                }
                Ok(StreamSchedule::class_schedule(mix, seed))
            }
            "builtin-drift" => {
                forbid(self.chunks.is_some(), "chunks", "builtin-drift")?;
                forbid(self.proportion.is_some(), "proportion", "builtin-drift")?;
                forbid(self.mix.is_some(), "mix", "builtin-drift")?;
                Ok(builtin_drift_schedule(seed))
            }
            other => bail!(
                "[stream] unknown kind {other:?}; expected \"stationary\", \"two\", \
                 \"class-schedule\" or \"builtin-drift\""
            ),
        }
    }
}
