//! The prequential run loop: streams chunks through the chosen deep-memory
//! method, feeds every arriving instance to the fast memory against the
//! current kernel basis, expands the basis after each structural event (new
//! weak model), evaluates at chunk boundaries, and persists metrics, a run
//! manifest, the test set, and a final checkpoint.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use dualmem::{
    load_checkpoint, load_idx, save_checkpoint, synth_mixture, write_idx, Dataset, EnsembleState,
    FeatureBlock, LabeledExample, MethodKind, MhnModel, SplitTag,
};

use crate::config::{DatasetSpec, ExperimentConfig, FastSpec, StorageMode};
use crate::metrics::{MetricsRecord, MetricsWriter};

/// Files a run writes into its output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPaths {
    pub out_dir: PathBuf,
    pub metrics: PathBuf,
    pub checkpoint: PathBuf,
    pub manifest: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl RunPaths {
    pub fn new(out_dir: &Path) -> Self {
        Self {
            out_dir: out_dir.to_path_buf(),
            metrics: out_dir.join("metrics.jsonl"),
            checkpoint: out_dir.join("final.ckpt"),
            manifest: out_dir.join("manifest.json"),
            test_images: out_dir.join("test-images-idx3-ubyte"),
            test_labels: out_dir.join("test-labels-idx1-ubyte"),
        }
    }
}

/// Fast-memory cost profile of one chunk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FastChunkTiming {
    /// Instances that performed a fast-memory update this chunk.
    pub instances: usize,
    /// Mean per-instance update time (kernel evaluation + least-squares),
    /// excluding feature extraction.
    pub mean_update_ms: f64,
    /// Mean per-instance feature-extraction time (ensemble hidden passes).
    pub mean_extract_ms: f64,
    /// Kernel count in effect at the chunk boundary.
    pub kernel_count: usize,
}

/// Wall-time measurements the speed comparisons are made from.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TimingReport {
    /// One entry per weak-model spawn: (examples trained on, wall ms of the
    /// spawning step).
    pub weak_spawns: Vec<(usize, f64)>,
    /// One entry per chunk while fast memory is enabled.
    pub fast_chunks: Vec<FastChunkTiming>,
}

/// Everything a finished run hands back to callers.
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub deep: EnsembleState<f32>,
    pub fast: Option<MhnModel<f64>>,
    pub timing: TimingReport,
    pub paths: RunPaths,
    pub train_len: usize,
    pub test_len: usize,
}

/// Builds the train/test datasets a config describes.
///
/// Synthetic data is drawn once (train and test share cluster centers), then
/// affinely mapped to [0, 1] and quantized to 256 levels exactly as the image
/// container stores them, then split with exactly `test_per_class` test
/// examples per class.
pub fn prepare_dataset(spec: &DatasetSpec) -> Result<(Dataset<f32>, Dataset<f32>)> {
    match spec {
        DatasetSpec::Synthetic {
            classes,
            modes_per_class,
            dim,
            train_per_class,
            test_per_class,
            separation,
            seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut all: Dataset<f32> = synth_mixture(
                *classes,
                *modes_per_class,
                *dim,
                train_per_class + test_per_class,
                *separation,
                &mut rng,
            )?;
            quantize_unit(&mut all.examples)?;
            let mut taken = vec![0usize; *classes];
            let (mut test, mut train) = (Vec::new(), Vec::new());
            for ex in all.examples {
                let slot = &mut taken[ex.label as usize];
                if *slot < *test_per_class {
                    *slot += 1;
                    test.push(ex);
                } else {
                    train.push(ex);
                }
            }
            Ok((
                Dataset::new(train, *classes, *dim, SplitTag::Train)?,
                Dataset::new(test, *classes, *dim, SplitTag::Test)?,
            ))
        }
        DatasetSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            truncate_train,
            truncate_test,
        } => {
            let mut train: Dataset<f32> = load_idx(train_images, train_labels, SplitTag::Train)?;
            let mut test: Dataset<f32> = load_idx(test_images, test_labels, SplitTag::Test)?;
            if let Some(n) = truncate_train {
                train.truncate(*n);
            }
            if let Some(n) = truncate_test {
                test.truncate(*n);
            }
            if train.feature_dim != test.feature_dim {
                bail!(
                    "train feature dim {} does not match test feature dim {}",
                    train.feature_dim,
                    test.feature_dim
                );
            }
            Ok((train, test))
        }
    }
}

/// Snaps features onto the 256-level unit grid, storing exactly the value the
/// image container will load back (`level * (1/255)` in f32), so writing and
/// re-reading the dataset is bit-exact.
fn quantize_unit(examples: &mut [LabeledExample<f32>]) -> Result<()> {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for ex in examples.iter() {
        for &v in &ex.features {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        bail!("synthetic features span a degenerate range [{lo}, {hi}]");
    }
    let span = hi - lo;
    let scale = (1.0f64 / 255.0) as f32;
    for ex in examples.iter_mut() {
        for v in &mut ex.features {
            let level = (((*v - lo) / span) * 255.0).round().clamp(0.0, 255.0);
            *v = level * scale;
        }
    }
    Ok(())
}

/// Accuracy and per-class accuracy of a predictor over a test set. Classes
/// absent from the test set report 0; the support-weighted mean of the
/// per-class accuracies equals the overall accuracy.
pub fn evaluate<P>(mut predict: P, test: &Dataset<f32>) -> Result<(f64, Vec<f64>)>
where
    P: FnMut(&[f32]) -> Result<u32>,
{
    if test.is_empty() {
        bail!("cannot evaluate on an empty test set");
    }
    let mut hits = vec![0usize; test.class_count];
    let mut support = vec![0usize; test.class_count];
    for ex in &test.examples {
        support[ex.label as usize] += 1;
        if predict(&ex.features)? == ex.label {
            hits[ex.label as usize] += 1;
        }
    }
    let total_hits: usize = hits.iter().sum();
    let acc = total_hits as f64 / test.len() as f64;
    let per_class = hits
        .iter()
        .zip(&support)
        .map(|(&h, &s)| if s == 0 { 0.0 } else { h as f64 / s as f64 })
        .collect();
    Ok((acc, per_class))
}

/// The feature vector the fast memory consumes for input `x`: hidden
/// activations of every weak model, concatenated in creation order, with the
/// block layout that produced it.
pub fn feature_concat(
    deep: &EnsembleState<f32>,
    x: &[f32],
) -> Result<(Vec<f64>, Vec<FeatureBlock>)> {
    if deep.members().is_empty() {
        bail!("feature extraction requires at least one weak model");
    }
    let mut features = Vec::new();
    let mut blocks = Vec::new();
    for m in deep.members() {
        let start = features.len();
        features.extend(m.net.hidden_features(x)?.into_iter().map(f64::from));
        blocks.push(FeatureBlock { model_id: m.id, start, len: features.len() - start });
    }
    Ok((features, blocks))
}

/// Runs an experiment end to end; see [`run_experiment_with`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    run_experiment_with(cfg, |_| ())
}

/// Runs an experiment end to end, invoking `on_record` as each metrics record
/// is written (the CLI uses this for progress lines).
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    mut on_record: impl FnMut(&MetricsRecord),
) -> Result<RunOutput> {
    let started = Instant::now();
    let (train, test) = prepare_dataset(&cfg.dataset)?;
    if train.is_empty() {
        bail!("training set is empty");
    }
    if test.is_empty() {
        bail!("test set is empty");
    }

    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating output directory {}", cfg.out_dir.display()))?;
    let paths = RunPaths::new(&cfg.out_dir);
    write_idx(&test, &paths.test_images, &paths.test_labels)?;

    let deep = EnsembleState::init(
        cfg.method,
        cfg.deep_config(train.feature_dim, train.class_count),
        cfg.seed,
    )?;
    let fast = match &cfg.fast {
        Some(spec) => Some(FastState::new(spec.clone(), train.class_count, cfg.seed)?),
        None => None,
    };
    let writer = MetricsWriter::create(&paths.metrics)?;

    let mut run = Run {
        cfg,
        test: &test,
        deep,
        fast,
        timing: TimingReport::default(),
        records: Vec::new(),
        writer,
        on_record: &mut on_record,
    };

    let mut stream_summary = None;
    if cfg.method == MethodKind::Batch {
        // Degenerate stream: the whole training set arrives at once.
        let t0 = Instant::now();
        run.deep.step(&train.examples)?;
        run.boundary(elapsed_ms(t0))?;
    } else {
        let chunks = cfg.schedule.materialize(&train)?;
        stream_summary = Some(StreamSummary::new(cfg, &chunks, train.class_count));
        for chunk in &chunks {
            let t0 = Instant::now();
            if cfg.method.slides() {
                for slice in chunk.chunks(cfg.n_new) {
                    run.deliver(slice)?;
                }
            } else {
                run.deliver(chunk)?;
            }
            run.boundary(elapsed_ms(t0))?;
        }
    }

    let Run { deep, fast, timing, records, .. } = run;
    let fast = fast.map(|f| f.model);
    save_checkpoint(&paths.checkpoint, &deep, fast.as_ref())?;
    write_manifest(
        &paths.manifest,
        cfg,
        &train,
        &test,
        stream_summary,
        &deep,
        fast.as_ref(),
        &timing,
        &records,
        started.elapsed().as_secs_f64(),
    )?;

    Ok(RunOutput {
        records,
        deep,
        fast,
        timing,
        paths,
        train_len: train.len(),
        test_len: test.len(),
    })
}

fn elapsed_ms(t0: Instant) -> f64 {
    t0.elapsed().as_secs_f64() * 1e3
}

/// Fast-memory side of a run: the model plus the storage it refits over and
/// the kernel-sampling generator (its own stream, independent of the deep
/// memory's).
struct FastState {
    spec: FastSpec,
    model: MhnModel<f64>,
    rng: ChaCha8Rng,
    /// Raw examples retained for refits (all-seen mode).
    raw: Vec<LabeledExample<f32>>,
    /// Cached concatenated features aligned with `raw`; extended in place
    /// when a new member's block arrives.
    feats: Vec<Vec<f64>>,
    /// Member ids whose blocks are in the basis, in block order.
    known: Vec<u64>,
    /// Per-chunk timing accumulator.
    instances: usize,
    update_s: f64,
    extract_s: f64,
}

impl FastState {
    fn new(spec: FastSpec, class_count: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Ok(Self {
            spec,
            model: MhnModel::new(class_count)?,
            rng,
            raw: Vec::new(),
            feats: Vec::new(),
            known: Vec::new(),
            instances: 0,
            update_s: 0.0,
            extract_s: 0.0,
        })
    }

    fn take_chunk_timing(&mut self) -> FastChunkTiming {
        let n = self.instances.max(1) as f64;
        let t = FastChunkTiming {
            instances: self.instances,
            mean_update_ms: self.update_s * 1e3 / n,
            mean_extract_ms: self.extract_s * 1e3 / n,
            kernel_count: self.model.kernel_count(),
        };
        self.instances = 0;
        self.update_s = 0.0;
        self.extract_s = 0.0;
        t
    }
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    test: &'a Dataset<f32>,
    deep: EnsembleState<f32>,
    fast: Option<FastState>,
    timing: TimingReport,
    records: Vec<MetricsRecord>,
    writer: MetricsWriter,
    on_record: &'a mut dyn FnMut(&MetricsRecord),
}

impl Run<'_> {
    fn emit(&mut self, record: MetricsRecord) -> Result<()> {
        self.writer.append(&record)?;
        (self.on_record)(&record);
        self.records.push(record);
        Ok(())
    }

    /// Models consulted at prediction time right now.
    fn committee(&self) -> usize {
        match self.cfg.method {
            MethodKind::MbsGd | MethodKind::Batch => usize::from(self.deep.general().is_some()),
            _ => self.deep.members().len(),
        }
    }

    /// One stream delivery: fast-memory updates for each arriving instance
    /// (against the basis as it stands), then the deep-memory step, then
    /// basis expansion if that step spawned a weak model.
    fn deliver(&mut self, slice: &[LabeledExample<f32>]) -> Result<()> {
        let mut fast = self.fast.take();
        if let Some(f) = fast.as_mut() {
            let base_seen = self.deep.instances_seen();
            for (i, ex) in slice.iter().enumerate() {
                let has_blocks = !f.model.basis.blocks.is_empty();
                let t_extract = Instant::now();
                let feats: Vec<f64> = if self.deep.members().is_empty() {
                    Vec::new()
                } else {
                    feature_concat(&self.deep, &ex.features)?.0
                };
                f.extract_s += t_extract.elapsed().as_secs_f64();
                if has_blocks {
                    let t_update = Instant::now();
                    f.model.update(&feats, ex.label)?;
                    let update_s = t_update.elapsed().as_secs_f64();
                    f.update_s += update_s;
                    f.instances += 1;
                    if self.cfg.eval_every_instance {
                        let (acc, per_class) = evaluate(
                            |x| {
                                let (feats, _) = feature_concat(&self.deep, x)?;
                                Ok(f.model.predict(&feats)?)
                            },
                            self.test,
                        )?;
                        let record = MetricsRecord {
                            step: base_seen + i as u64 + 1,
                            method: format!("mhn-on-{}", self.cfg.method),
                            acc,
                            per_class_acc: per_class,
                            wall_ms: update_s * 1e3,
                            ensemble_size: self.deep.members().len(),
                            kernel_count: f.model.kernel_count(),
                        };
                        self.emit(record)?;
                    }
                }
                if f.spec.storage == StorageMode::AllSeen {
                    f.raw.push(ex.clone());
                    f.feats.push(feats);
                }
            }
        }

        let t_step = Instant::now();
        let outcome = self.deep.step(slice)?;
        let step_ms = elapsed_ms(t_step);
        if outcome.spawned {
            self.timing.weak_spawns.push((slice.len(), step_ms));
        }

        if let Some(f) = fast.as_mut() {
            if outcome.spawned {
                self.expand_new_blocks(f)?;
            }
        }
        self.fast = fast;
        Ok(())
    }

    /// Gives the fast memory a feature block for every member it has not seen
    /// yet, refitting over the configured storage in the expanded space.
    fn expand_new_blocks(&self, f: &mut FastState) -> Result<()> {
        for m in self.deep.members() {
            if f.known.contains(&m.id) {
                continue;
            }
            let width = m.net.hidden_dim();
            let storage: Vec<LabeledExample<f64>> = match f.spec.storage {
                StorageMode::AllSeen => {
                    for (raw, feats) in f.raw.iter().zip(f.feats.iter_mut()) {
                        feats.extend(
                            m.net.hidden_features(&raw.features)?.into_iter().map(f64::from),
                        );
                    }
                    f.raw
                        .iter()
                        .zip(&f.feats)
                        .map(|(raw, feats)| LabeledExample::new(feats.clone(), raw.label))
                        .collect()
                }
                StorageMode::Window => self
                    .deep
                    .window()
                    .items()
                    .iter()
                    .map(|ex| {
                        Ok(LabeledExample::new(
                            feature_concat(&self.deep, &ex.features)?.0,
                            ex.label,
                        ))
                    })
                    .collect::<Result<_>>()?,
            };
            f.model.expand(m.id, width, &storage, &f.spec.memory, &mut f.rng)?;
            f.known.push(m.id);
        }
        Ok(())
    }

    /// Chunk-boundary evaluation: one record for the deep memory (once a
    /// model exists) and one for the fast memory (once it has a basis, unless
    /// the per-instance trace already covers it).
    fn boundary(&mut self, wall_ms: f64) -> Result<()> {
        let committee = self.committee();
        let kernels = self.fast.as_ref().map_or(0, |f| f.model.kernel_count());
        if committee > 0 {
            let (acc, per_class) =
                evaluate(|x| Ok(self.deep.predict(x)?), self.test)?;
            let record = MetricsRecord {
                step: self.deep.instances_seen(),
                method: self.cfg.method.to_string(),
                acc,
                per_class_acc: per_class,
                wall_ms,
                ensemble_size: committee,
                kernel_count: kernels,
            };
            self.emit(record)?;
        }
        let mut fast = self.fast.take();
        if let Some(f) = fast.as_mut() {
            let chunk = f.take_chunk_timing();
            let fast_wall_ms =
                (chunk.mean_update_ms + chunk.mean_extract_ms) * chunk.instances as f64;
            self.timing.fast_chunks.push(chunk);
            if !f.model.basis.blocks.is_empty() && !self.cfg.eval_every_instance {
                let (acc, per_class) = evaluate(
                    |x| {
                        let (feats, _) = feature_concat(&self.deep, x)?;
                        Ok(f.model.predict(&feats)?)
                    },
                    self.test,
                )?;
                let record = MetricsRecord {
                    step: self.deep.instances_seen(),
                    method: format!("mhn-on-{}", self.cfg.method),
                    acc,
                    per_class_acc: per_class,
                    wall_ms: fast_wall_ms,
                    ensemble_size: committee,
                    kernel_count: f.model.kernel_count(),
                };
                self.emit(record)?;
            }
        }
        self.fast = fast;
        Ok(())
    }
}

#[derive(Serialize)]
struct StreamSummary {
    kind: String,
    seed: u64,
    chunk_count: usize,
    chunk_sizes: Vec<usize>,
    chunk_class_histograms: Vec<Vec<usize>>,
}

impl StreamSummary {
    fn new(cfg: &ExperimentConfig, chunks: &[Vec<LabeledExample<f32>>], class_count: usize) -> Self {
        let histograms = chunks
            .iter()
            .map(|chunk| {
                let mut h = vec![0usize; class_count];
                for ex in chunk {
                    h[ex.label as usize] += 1;
                }
                h
            })
            .collect();
        Self {
            kind: schedule_kind_name(cfg),
            seed: cfg.schedule.seed,
            chunk_count: chunks.len(),
            chunk_sizes: chunks.iter().map(Vec::len).collect(),
            chunk_class_histograms: histograms,
        }
    }
}

fn schedule_kind_name(cfg: &ExperimentConfig) -> String {
    match &cfg.schedule.kind {
        dualmem::ScheduleKind::Stationary { chunks } => format!("stationary({chunks})"),
        dualmem::ScheduleKind::Two { proportion } => format!("two({proportion})"),
        dualmem::ScheduleKind::ClassSchedule { mix } => format!("class-schedule({} chunks)", mix.len()),
    }
}

#[allow(clippy::too_many_arguments)]
fn write_manifest(
    path: &Path,
    cfg: &ExperimentConfig,
    train: &Dataset<f32>,
    test: &Dataset<f32>,
    stream: Option<StreamSummary>,
    deep: &EnsembleState<f32>,
    fast: Option<&MhnModel<f64>>,
    timing: &TimingReport,
    records: &[MetricsRecord],
    wall_s: f64,
) -> Result<()> {
    #[derive(Serialize)]
    struct DatasetSummary {
        source: String,
        classes: usize,
        feature_dim: usize,
        train_len: usize,
        test_len: usize,
    }
    #[derive(Serialize)]
    struct NetSummary {
        layer_dims: Vec<usize>,
        weak_epochs: usize,
        batch_size: usize,
        momentum: f32,
        online_rate: f32,
        n_subset: usize,
        n_new: usize,
    }
    #[derive(Serialize)]
    struct FastSummary {
        kernel_order: usize,
        kernels_per_block: Option<usize>,
        keep_fraction: f64,
        storage: String,
        final_kernel_count: usize,
    }
    #[derive(Serialize)]
    struct Outcome {
        records: usize,
        final_members: usize,
        final_accuracy: Option<f64>,
        wall_s: f64,
    }
    #[derive(Serialize)]
    struct Manifest {
        method: String,
        seed: u64,
        dataset: DatasetSummary,
        stream: Option<StreamSummary>,
        net: NetSummary,
        fast_memory: Option<FastSummary>,
        timing: TimingReport,
        outcome: Outcome,
    }

    let manifest = Manifest {
        method: cfg.method.to_string(),
        seed: cfg.seed,
        dataset: DatasetSummary {
            source: match &cfg.dataset {
                DatasetSpec::Synthetic { .. } => "synthetic".into(),
                DatasetSpec::Idx { .. } => "idx".into(),
            },
            classes: train.class_count,
            feature_dim: train.feature_dim,
            train_len: train.len(),
            test_len: test.len(),
        },
        stream,
        net: NetSummary {
            layer_dims: cfg.layer_dims(train.feature_dim, train.class_count),
            weak_epochs: cfg.weak_epochs,
            batch_size: cfg.batch_size,
            momentum: cfg.momentum,
            online_rate: cfg.online_rate,
            n_subset: cfg.n_subset,
            n_new: cfg.n_new,
        },
        fast_memory: cfg.fast.as_ref().map(|spec| FastSummary {
            kernel_order: spec.memory.kernel_order,
            kernels_per_block: spec.memory.kernels_per_block,
            keep_fraction: spec.memory.keep_fraction,
            storage: match spec.storage {
                StorageMode::AllSeen => "all-seen".into(),
                StorageMode::Window => "window".into(),
            },
            final_kernel_count: fast.map_or(0, MhnModel::kernel_count),
        }),
        timing: timing.clone(),
        outcome: Outcome {
            records: records.len(),
            final_members: deep.members().len(),
            final_accuracy: records
                .iter()
                .rev()
                .find(|r| r.method == cfg.method.to_string())
                .map(|r| r.acc),
            wall_s,
        },
    };
    let body = serde_json::to_string_pretty(&manifest)?;
    fs::write(path, body).with_context(|| format!("writing manifest {}", path.display()))?;
    Ok(())
}

/// Materializes the configured stream and writes one manifest per chunk
/// (`chunk-NN.tsv`: stream position and label per line) plus a `stream.json`
/// summary. Returns the chunk manifest paths.
pub fn gen_stream(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let (train, _) = prepare_dataset(&cfg.dataset)?;
    let chunks = cfg.schedule.materialize(&train)?;
    fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let mut paths = Vec::with_capacity(chunks.len());
    let mut pos = 0usize;
    for (i, chunk) in chunks.iter().enumerate() {
        let path = out.join(format!("chunk-{i:02}.tsv"));
        let mut body = String::from("# stream_pos\tlabel\n");
        for ex in chunk {
            body.push_str(&format!("{pos}\t{}\n", ex.label));
            pos += 1;
        }
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        paths.push(path);
    }
    let summary = StreamSummary::new(cfg, &chunks, train.class_count);
    fs::write(out.join("stream.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(paths)
}

/// Accuracy report computed from a saved checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub deep_acc: f64,
    pub deep_per_class: Vec<f64>,
    /// Present when the checkpoint carries a fast memory with a basis.
    pub fast_acc: Option<f64>,
    pub fast_per_class: Option<Vec<f64>>,
    pub test_len: usize,
}

/// Finds the IDX test pair inside a directory (the names a run writes, or
/// the standard MNIST test-set names).
pub fn resolve_test_pair(path: &Path) -> Result<(PathBuf, PathBuf)> {
    if !path.is_dir() {
        bail!(
            "--test expects a directory holding an IDX image/label pair, got {}",
            path.display()
        );
    }
    const CANDIDATES: [(&str, &str); 3] = [
        ("test-images-idx3-ubyte", "test-labels-idx1-ubyte"),
        ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
        ("t10k-images.idx3-ubyte", "t10k-labels.idx1-ubyte"),
    ];
    for (images, labels) in CANDIDATES {
        let (ip, lp) = (path.join(images), path.join(labels));
        if ip.is_file() && lp.is_file() {
            return Ok((ip, lp));
        }
    }
    bail!(
        "no IDX test pair found in {} (looked for {})",
        path.display(),
        CANDIDATES.map(|(i, _)| i).join(", ")
    )
}

/// Loads a checkpoint and scores it against an on-disk test set.
pub fn eval_checkpoint(checkpoint: &Path, test_dir: &Path) -> Result<EvalReport> {
    let (deep, fast) =
        load_checkpoint(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let (images, labels) = resolve_test_pair(test_dir)?;
    let test: Dataset<f32> = load_idx(&images, &labels, SplitTag::Test)?;
    let (deep_acc, deep_per_class) = evaluate(|x| Ok(deep.predict(x)?), &test)?;
    let (fast_acc, fast_per_class) = match &fast {
        Some(model) if !model.basis.blocks.is_empty() => {
            let (acc, per_class) = evaluate(
                |x| {
                    let (feats, _) = feature_concat(&deep, x)?;
                    Ok(model.predict(&feats)?)
                },
                &test,
            )?;
            (Some(acc), Some(per_class))
        }
        _ => (None, None),
    };
    Ok(EvalReport {
        method: deep.method().to_string(),
        deep_acc,
        deep_per_class,
        fast_acc,
        fast_per_class,
        test_len: test.len(),
    })
}
