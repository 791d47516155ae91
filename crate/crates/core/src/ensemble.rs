//! Stream-learning orchestrators over a bounded storage window.
//!
//! Six methods share one state machine. Chunk-at-a-time methods
//! (naive-ensemble, neural-prior, neural-prior-ensemble, batch) train a
//! model per call; sliding methods (mbs-gd, mbs-gd-ensemble) accumulate
//! `n_new`-sized deliveries into the window, bootstrap a general model once
//! the window first fills, then train it one epoch per slide at a 1/sqrt(t)
//! rate. The ensemble variant additionally spawns a weak model, warm-started
//! from the general model, every time the window has fully turned over.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledExample;
use crate::error::{Error, Result};
use crate::mlp::{transfer_init, LrSchedule, Mlp};
use crate::scalar::Scalar;
use crate::window::StorageWindow;

/// The six stream-learning methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodKind {
    /// One independently initialized model per chunk; mean vote.
    NaiveEnsemble,
    /// Single model, one epoch over the sliding window per delivery.
    MbsGd,
    /// MbsGd plus periodically spawned warm-started ensemble members.
    MbsGdEnsemble,
    /// Single model warm-started from its predecessor each chunk.
    NeuralPrior,
    /// Warm-start chain where every model joins the ensemble; mean vote.
    NeuralPriorEnsemble,
    /// One model trained once on everything; degenerate stream.
    Batch,
}

impl MethodKind {
    pub const ALL: [MethodKind; 6] = [
        MethodKind::NaiveEnsemble,
        MethodKind::MbsGd,
        MethodKind::MbsGdEnsemble,
        MethodKind::NeuralPrior,
        MethodKind::NeuralPriorEnsemble,
        MethodKind::Batch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::NaiveEnsemble => "naive-ensemble",
            MethodKind::MbsGd => "mbs-gd",
            MethodKind::MbsGdEnsemble => "mbs-gd-ensemble",
            MethodKind::NeuralPrior => "neural-prior",
            MethodKind::NeuralPriorEnsemble => "neural-prior-ensemble",
            MethodKind::Batch => "batch",
        }
    }

    /// Whether deliveries are `n_new`-sized slides (vs whole chunks).
    pub fn slides(self) -> bool {
        matches!(self, MethodKind::MbsGd | MethodKind::MbsGdEnsemble)
    }

    /// Whether inference votes over a growing member list.
    pub fn is_ensemble(self) -> bool {
        matches!(
            self,
            MethodKind::NaiveEnsemble | MethodKind::MbsGdEnsemble | MethodKind::NeuralPriorEnsemble
        )
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidSchedule {
                reason: format!(
                    "unknown method {s:?}; expected one of {}",
                    MethodKind::ALL.map(MethodKind::name).join(", ")
                ),
            })
    }
}

/// Hyperparameters shared by all methods.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepConfig<F> {
    /// Network shape: input, hidden layers, class count.
    pub layer_dims: Vec<usize>,
    /// Rate schedule for chunk-style training (bootstrap and weak models).
    pub chunk_schedule: LrSchedule<F>,
    /// Base rate for post-bootstrap slide updates (decayed as 1/sqrt(t)).
    pub online_rate_base: F,
    pub momentum: F,
    pub batch_size: usize,
    /// Epoch budget for every chunk-style training pass.
    pub weak_epochs: usize,
    /// Storage window capacity.
    pub n_subset: usize,
    /// Delivery size for sliding methods; must divide `n_subset`.
    pub n_new: usize,
}

impl<F: Scalar> DeepConfig<F> {
    fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 || self.layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArchitecture {
                dims: self.layer_dims.clone(),
            });
        }
        if self.n_subset == 0 || self.n_new == 0 || self.n_new > self.n_subset {
            return Err(Error::InvalidSchedule {
                reason: format!(
                    "window capacity {} and delivery size {} must be positive with delivery <= capacity",
                    self.n_subset, self.n_new
                ),
            });
        }
        if self.n_subset % self.n_new != 0 {
            return Err(Error::InvalidSchedule {
                reason: format!(
                    "delivery size {} must divide window capacity {}",
                    self.n_new, self.n_subset
                ),
            });
        }
        if self.batch_size == 0 {
            return Err(Error::EmptyInput { context: "batch size" });
        }
        let m = self.momentum.to_f64_lossy();
        if !(0.0..1.0).contains(&m) {
            return Err(Error::NonFinite {
                context: "momentum outside [0, 1)",
            });
        }
        let r = self.online_rate_base.to_f64_lossy();
        if !r.is_finite() || r <= 0.0 {
            return Err(Error::InvalidSchedule {
                reason: format!("online rate base must be positive and finite, got {r}"),
            });
        }
        Ok(())
    }
}

/// One ensemble member with its creation id (dense from 0, stable under
/// pruning; feature blocks downstream are keyed by it).
#[derive(Debug, Clone, PartialEq)]
pub struct WeakModel<F> {
    pub id: u64,
    pub net: Mlp<F>,
}

/// What a step did, for logging and structural-event handling downstream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome<F> {
    /// A new weak model joined (or replaced) the member list.
    pub spawned: bool,
    /// This call performed the one-time window-fill bootstrap.
    pub bootstrapped: bool,
    /// Learning rate used if this call was a slide update.
    pub online_rate: Option<F>,
}

/// Full state of one stream-learning run.
#[derive(Debug, Clone)]
pub struct EnsembleState<F> {
    method: MethodKind,
    cfg: DeepConfig<F>,
    weak_models: Vec<WeakModel<F>>,
    general_model: Option<Mlp<F>>,
    window: StorageWindow<F>,
    rng: ChaCha8Rng,
    next_model_id: u64,
    instances_seen: u64,
    steps_taken: u64,
    /// Completed slide updates since bootstrap (sliding methods).
    online_updates: u64,
    slides_since_spawn: u64,
    /// `steps_taken` (chunk methods) or `online_updates` (sliding) at the
    /// last spawn; the data behind that marker is what the next spawn must
    /// be disjoint from.
    prev_spawn_marker: Option<u64>,
}

impl<F: Scalar> EnsembleState<F> {
    pub fn init(method: MethodKind, cfg: DeepConfig<F>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let window = StorageWindow::new(cfg.n_subset)?;
        Ok(Self {
            method,
            cfg,
            weak_models: Vec::new(),
            general_model: None,
            window,
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_model_id: 0,
            instances_seen: 0,
            steps_taken: 0,
            online_updates: 0,
            slides_since_spawn: 0,
            prev_spawn_marker: None,
        })
    }

    pub fn method(&self) -> MethodKind {
        self.method
    }

    pub fn config(&self) -> &DeepConfig<F> {
        &self.cfg
    }

    pub fn members(&self) -> &[WeakModel<F>] {
        &self.weak_models
    }

    pub fn general(&self) -> Option<&Mlp<F>> {
        self.general_model.as_ref()
    }

    pub fn window(&self) -> &StorageWindow<F> {
        &self.window
    }

    pub fn instances_seen(&self) -> u64 {
        self.instances_seen
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    /// Whether sliding methods have completed their window-fill bootstrap.
    pub fn bootstrapped(&self) -> bool {
        self.general_model.is_some()
    }

    /// Feeds one delivery of stream data: a chunk for chunk-at-a-time
    /// methods, at most `n_new` examples for sliding methods.
    pub fn step(&mut self, data: &[LabeledExample<F>]) -> Result<StepOutcome<F>> {
        if data.is_empty() {
            return Err(Error::EmptyInput { context: "stream delivery" });
        }
        for ex in data {
            if ex.features.len() != self.cfg.layer_dims[0] {
                return Err(Error::DimensionMismatch {
                    context: "stream delivery features",
                    expected: self.cfg.layer_dims[0],
                    got: ex.features.len(),
                });
            }
        }
        let outcome = match self.method {
            MethodKind::NaiveEnsemble => self.naive_step(data),
            MethodKind::MbsGd => self.slide_step(data, false),
            MethodKind::MbsGdEnsemble => self.slide_step(data, true),
            MethodKind::NeuralPrior => self.prior_step(data, false),
            MethodKind::NeuralPriorEnsemble => self.prior_step(data, true),
            MethodKind::Batch => self.batch_step(data),
        }?;
        self.instances_seen += data.len() as u64;
        self.steps_taken += 1;
        Ok(outcome)
    }

    /// Fresh random init trained on this chunk alone; joins the ensemble.
    fn naive_step(&mut self, chunk: &[LabeledExample<F>]) -> Result<StepOutcome<F>> {
        self.absorb_into_window(chunk)?;
        let mut net = Mlp::init(&self.cfg.layer_dims, &mut self.rng)?;
        self.train_chunk_style(&mut net, chunk)?;
        self.push_member(net);
        Ok(StepOutcome { spawned: true, bootstrapped: false, online_rate: None })
    }

    /// Warm-start chain: each chunk's model starts from its predecessor's
    /// non-final layers. `keep_all` retains every model (ensemble variant);
    /// otherwise only the latest survives.
    fn prior_step(&mut self, chunk: &[LabeledExample<F>], keep_all: bool) -> Result<StepOutcome<F>> {
        self.absorb_into_window(chunk)?;
        let mut net = match self.weak_models.last() {
            Some(prev) => transfer_init(&prev.net, &mut self.rng)?,
            None => Mlp::init(&self.cfg.layer_dims, &mut self.rng)?,
        };
        self.train_chunk_style(&mut net, chunk)?;
        if !keep_all {
            self.weak_models.clear();
        }
        self.push_member(net);
        Ok(StepOutcome { spawned: true, bootstrapped: false, online_rate: None })
    }

    /// One model over the whole delivery; replaces any previous model.
    fn batch_step(&mut self, data: &[LabeledExample<F>]) -> Result<StepOutcome<F>> {
        self.absorb_into_window(data)?;
        let mut net = Mlp::init(&self.cfg.layer_dims, &mut self.rng)?;
        self.train_chunk_style(&mut net, data)?;
        self.general_model = Some(net);
        Ok(StepOutcome { spawned: false, bootstrapped: false, online_rate: None })
    }

    /// Sliding path shared by mbs-gd and its ensemble variant.
    fn slide_step(&mut self, new_data: &[LabeledExample<F>], ensemble: bool) -> Result<StepOutcome<F>> {
        if new_data.len() > self.cfg.n_new {
            return Err(Error::InvalidSchedule {
                reason: format!(
                    "delivery of {} exceeds the configured delivery size {}",
                    new_data.len(),
                    self.cfg.n_new
                ),
            });
        }
        self.window.push_batch(new_data)?;

        if self.general_model.is_none() {
            if self.window.len() < self.cfg.n_subset {
                // Still filling toward the bootstrap; no training yet.
                return Ok(StepOutcome { spawned: false, bootstrapped: false, online_rate: None });
            }
            // Window just filled: batch-style bootstrap of the general model.
            let mut net = Mlp::init(&self.cfg.layer_dims, &mut self.rng)?;
            let window_data: Vec<LabeledExample<F>> = self.window.items().to_vec();
            self.train_chunk_style(&mut net, &window_data)?;
            self.general_model = Some(net);
            let mut spawned = false;
            if ensemble {
                // The bootstrap data is trivially disjoint from any earlier
                // spawn's data; the first weak model spawns here.
                self.spawn_from_general(&window_data)?;
                spawned = true;
            }
            return Ok(StepOutcome { spawned, bootstrapped: true, online_rate: None });
        }

        // Slide update: one epoch over the window at base/sqrt(t), where t
        // counts slide updates so the first one runs at the full base rate.
        let t = 1.0 + self.online_updates as f64;
        let schedule = LrSchedule::inv_sqrt(self.cfg.online_rate_base)?;
        let rate = schedule.rate_at_time(t)?;
        let window_data: Vec<LabeledExample<F>> = self.window.items().to_vec();
        let net = self.general_model.as_mut().expect("bootstrapped above");
        net.train_one_epoch(&window_data, rate, self.cfg.momentum, self.cfg.batch_size, &mut self.rng)?;
        self.online_updates += 1;
        self.slides_since_spawn += 1;

        let mut spawned = false;
        if ensemble && self.slides_since_spawn >= (self.cfg.n_subset / self.cfg.n_new) as u64 {
            // Every example from the last spawn has been evicted: the window
            // is disjoint from that spawn's data.
            self.spawn_from_general(&window_data)?;
            spawned = true;
        }
        Ok(StepOutcome { spawned, bootstrapped: false, online_rate: Some(rate) })
    }

    /// Warm-starts a weak model from the general model, fine-tunes it on the
    /// current window, and appends it.
    fn spawn_from_general(&mut self, window_data: &[LabeledExample<F>]) -> Result<()> {
        let general = self.general_model.as_ref().expect("spawn requires a general model");
        let mut net = transfer_init(general, &mut self.rng)?;
        self.train_chunk_style(&mut net, window_data)?;
        self.push_member(net);
        Ok(())
    }

    fn train_chunk_style(&mut self, net: &mut Mlp<F>, data: &[LabeledExample<F>]) -> Result<()> {
        net.train_epochs(
            data,
            &self.cfg.chunk_schedule,
            self.cfg.weak_epochs,
            self.cfg.momentum,
            self.cfg.batch_size,
            &mut self.rng,
        )
    }

    fn push_member(&mut self, net: Mlp<F>) {
        self.weak_models.push(WeakModel { id: self.next_model_id, net });
        self.next_model_id += 1;
        self.slides_since_spawn = 0;
        self.prev_spawn_marker = Some(if self.method.slides() {
            self.online_updates
        } else {
            self.steps_taken
        });
    }

    /// Keeps chunk-method windows fed without ever overflowing: oversized
    /// chunks enter in capacity-sized pieces, FIFO keeping the most recent.
    fn absorb_into_window(&mut self, data: &[LabeledExample<F>]) -> Result<()> {
        for piece in data.chunks(self.cfg.n_subset) {
            self.window.push_batch(piece)?;
        }
        Ok(())
    }

    /// Class probabilities under the method's inference rule: the general
    /// model for mbs-gd/batch, the newest member for neural-prior, and the
    /// unweighted mean of member probabilities for ensembles.
    pub fn predict_proba(&self, x: &[F]) -> Result<Vec<F>> {
        match self.method {
            MethodKind::MbsGd | MethodKind::Batch => self
                .general_model
                .as_ref()
                .ok_or(Error::NoModel { context: "general model not yet trained" })?
                .predict_proba(x),
            MethodKind::NeuralPrior => self
                .weak_models
                .last()
                .ok_or(Error::NoModel { context: "no model trained yet" })?
                .net
                .predict_proba(x),
            MethodKind::NaiveEnsemble | MethodKind::MbsGdEnsemble | MethodKind::NeuralPriorEnsemble => {
                if self.weak_models.is_empty() {
                    return Err(Error::NoModel { context: "ensemble has no members" });
                }
                let mut mean = vec![F::zero(); self.cfg.layer_dims[self.cfg.layer_dims.len() - 1]];
                for member in &self.weak_models {
                    let p = member.net.predict_proba(x)?;
                    for (m, v) in mean.iter_mut().zip(p) {
                        *m += v;
                    }
                }
                let inv = F::one() / F::from_usize(self.weak_models.len()).unwrap();
                mean.iter_mut().for_each(|m| *m *= inv);
                Ok(mean)
            }
        }
    }

    /// Predicted class: argmax of `predict_proba`, ties toward lower id.
    pub fn predict(&self, x: &[F]) -> Result<u32> {
        let probs = self.predict_proba(x)?;
        let mut best = 0usize;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = i;
            }
        }
        Ok(best as u32)
    }

    /// Retains only the `keep` most recently created members.
    pub fn prune_to_recent(&mut self, keep: usize) -> Result<()> {
        if keep == 0 {
            return Err(Error::DegenerateRetention {
                context: "ensemble pruning",
                reason: "must keep at least one member".into(),
            });
        }
        if keep < self.weak_models.len() {
            self.weak_models.drain(..self.weak_models.len() - keep);
        }
        Ok(())
    }

    /// Restores a state from checkpoint parts. Not a public constructor for
    /// ordinary use; validation mirrors `init`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        method: MethodKind,
        cfg: DeepConfig<F>,
        weak_models: Vec<WeakModel<F>>,
        general_model: Option<Mlp<F>>,
        window: StorageWindow<F>,
        rng: ChaCha8Rng,
        counters: StateCounters,
    ) -> Result<Self> {
        cfg.validate()?;
        if window.capacity() != cfg.n_subset {
            return Err(Error::CorruptCheckpoint {
                reason: format!(
                    "window capacity {} does not match configured {}",
                    window.capacity(),
                    cfg.n_subset
                ),
            });
        }
        if let Some(max_id) = weak_models.iter().map(|m| m.id).max() {
            if counters.next_model_id <= max_id {
                return Err(Error::CorruptCheckpoint {
                    reason: format!(
                        "next model id {} not above existing id {max_id}",
                        counters.next_model_id
                    ),
                });
            }
        }
        Ok(Self {
            method,
            cfg,
            weak_models,
            general_model,
            window,
            rng,
            next_model_id: counters.next_model_id,
            instances_seen: counters.instances_seen,
            steps_taken: counters.steps_taken,
            online_updates: counters.online_updates,
            slides_since_spawn: counters.slides_since_spawn,
            prev_spawn_marker: counters.prev_spawn_marker,
        })
    }

    pub(crate) fn counters(&self) -> StateCounters {
        StateCounters {
            next_model_id: self.next_model_id,
            instances_seen: self.instances_seen,
            steps_taken: self.steps_taken,
            online_updates: self.online_updates,
            slides_since_spawn: self.slides_since_spawn,
            prev_spawn_marker: self.prev_spawn_marker,
        }
    }

    pub(crate) fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }
}

/// Bookkeeping counters, grouped for checkpointing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct StateCounters {
    pub next_model_id: u64,
    pub instances_seen: u64,
    pub steps_taken: u64,
    pub online_updates: u64,
    pub slides_since_spawn: u64,
    pub prev_spawn_marker: Option<u64>,
}
