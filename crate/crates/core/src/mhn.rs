//! The fast memory: a multiplicative-kernel hypernetwork over concatenated
//! ensemble features, trained per instance by exact recursive least squares.
//!
//! One shared [`KernelBasis`] feeds `class_count` independent one-vs-rest
//! regressions. Each arriving observation updates every class state with
//! target 1 for its own class and 0 for the rest — a few matrix-vector
//! products, no storage access, so the per-instance cost depends only on the
//! kernel count. When the upstream ensemble grows, the basis expands with
//! kernels aimed at the new features and all regressions are refit in closed
//! form over the provided storage; low-relevance kernels are pruned on the
//! same occasion.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::{sample_kernels, KernelBasis};
use crate::rls::RlsState;
use crate::scalar::Scalar;
use crate::LabeledExample;

/// Tuning for the fast memory. `kernels_per_block = None` defaults to ten
/// times the width of the block being added.
#[derive(Debug, Clone, PartialEq)]
pub struct FastMemoryConfig {
    pub kernel_order: usize,
    pub kernels_per_block: Option<usize>,
    pub keep_fraction: f64,
}

impl Default for FastMemoryConfig {
    fn default() -> Self {
        Self {
            kernel_order: 2,
            kernels_per_block: None,
            keep_fraction: 0.75,
        }
    }
}

/// Multiplicative hypernetwork: shared kernels, one RLS regression per class.
#[derive(Debug, Clone, PartialEq)]
pub struct MhnModel<F> {
    pub basis: KernelBasis,
    /// One-vs-rest states, indexed by class id; all share `basis.output_len()`.
    pub classes: Vec<RlsState<F>>,
}

impl<F: Scalar> MhnModel<F> {
    /// Empty model over zero features: predictions are bias-only until the
    /// first block arrives via [`MhnModel::expand`].
    pub fn new(class_count: usize) -> Result<Self> {
        if class_count == 0 {
            return Err(Error::EmptyInput {
                context: "fast-memory class count",
            });
        }
        let basis = KernelBasis::empty();
        let classes = (0..class_count)
            .map(|_| RlsState::init(basis.output_len()))
            .collect::<Result<_>>()?;
        Ok(Self { basis, classes })
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn kernel_count(&self) -> usize {
        self.basis.kernels.len()
    }

    /// One online step: every class regression absorbs this observation with
    /// a one-hot target. The inverse-Gram update does not depend on the
    /// target, and every class sees the same inputs, so it is computed once
    /// and shared; only the moment vectors and weights are per-class. The
    /// result is identical to updating each class independently. Touches no
    /// storage; cost is `O(kernels^2)` for the Gram step plus
    /// `O(classes * kernels^2)` for the weight refreshes.
    pub fn update(&mut self, features: &[f64], label: u32) -> Result<()> {
        if label as usize >= self.classes.len() {
            return Err(Error::LabelOutOfRange {
                label,
                class_count: self.classes.len(),
            });
        }
        let phi = self.eval_phi(features)?;
        let (first, rest) = self.classes.split_first_mut().expect("class count validated > 0");
        first.update(&phi, if label == 0 { F::one() } else { F::zero() })?;
        for (c, state) in rest.iter_mut().enumerate() {
            let y = if c + 1 == label as usize { F::one() } else { F::zero() };
            state.absorb_with_shared_gram(first, &phi, y)?;
        }
        Ok(())
    }

    /// Per-class regression scores for one feature vector.
    pub fn predict_scores(&self, features: &[f64]) -> Result<Vec<F>> {
        let phi = self.eval_phi(features)?;
        self.classes.iter().map(|s| s.predict(&phi)).collect()
    }

    /// Highest-scoring class; ties break toward the lowest id.
    pub fn predict(&self, features: &[f64]) -> Result<u32> {
        let scores = self.predict_scores(features)?;
        let mut best = 0usize;
        for (i, s) in scores.iter().enumerate().skip(1) {
            if *s > scores[best] {
                best = i;
            }
        }
        Ok(best as u32)
    }

    fn eval_phi(&self, features: &[f64]) -> Result<Vec<F>> {
        let phi64 = self.basis.eval(features)?;
        Ok(phi64.into_iter().map(F::from_f64_lossy).collect())
    }

    /// Grows the feature space by one block, samples fresh kernels that touch
    /// it, refits every class in closed form over `storage`, then prunes back
    /// to `keep_fraction` (which refits again on the surviving basis).
    ///
    /// `storage` must hold feature vectors in the *expanded* space (the
    /// caller re-extracts features for retained raw examples) with one entry
    /// per example; it is read twice per refit and never retained.
    pub fn expand<R: Rng + ?Sized>(
        &mut self,
        model_id: u64,
        block_width: usize,
        storage: &[LabeledExample<f64>],
        cfg: &FastMemoryConfig,
        rng: &mut R,
    ) -> Result<()> {
        if storage.is_empty() {
            return Err(Error::EmptyInput {
                context: "expansion storage",
            });
        }
        let new_range = self.basis.add_block(model_id, block_width)?;
        let count = cfg.kernels_per_block.unwrap_or(10 * block_width);
        let fresh = sample_kernels(
            self.basis.feature_dim,
            count,
            cfg.kernel_order,
            Some(new_range),
            rng,
        )?;
        self.basis.kernels.extend(fresh);
        self.refit(storage)?;
        self.prune(cfg.keep_fraction, storage)
    }

    /// Drops the lowest-relevance kernels, keeping `floor(keep_fraction * n)`
    /// of them plus the constant bias, then refits over `storage`. Kernel
    /// relevance is the largest `|weight| * std(response)` across classes —
    /// a kernel nobody weights, or whose response never varies, goes first.
    pub fn prune(&mut self, keep_fraction: f64, storage: &[LabeledExample<f64>]) -> Result<()> {
        if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
            return Err(Error::DegenerateRetention {
                context: "kernel pruning",
                reason: format!("keep fraction {keep_fraction} outside (0, 1]"),
            });
        }
        if storage.is_empty() {
            return Err(Error::EmptyInput {
                context: "pruning storage",
            });
        }
        let n = self.basis.kernels.len();
        let keep = (keep_fraction * n as f64).floor() as usize;
        if keep >= n {
            return Ok(());
        }

        // Response spread per kernel over storage, one streaming pass.
        let k = self.basis.output_len();
        let mut sum = vec![0.0f64; k];
        let mut sum_sq = vec![0.0f64; k];
        for ex in storage {
            let phi = self.basis.eval(&ex.features)?;
            for (i, v) in phi.iter().enumerate() {
                sum[i] += v;
                sum_sq[i] += v * v;
            }
        }
        let inv_n = 1.0 / storage.len() as f64;
        let relevance: Vec<f64> = (0..n)
            .map(|i| {
                let mean = sum[i] * inv_n;
                let var = (sum_sq[i] * inv_n - mean * mean).max(0.0);
                let weight = self
                    .classes
                    .iter()
                    .map(|s| s.weights()[i].to_f64_lossy().abs())
                    .fold(0.0f64, f64::max);
                weight * var.sqrt()
            })
            .collect();

        let mut ranked: Vec<usize> = (0..n).collect();
        ranked.sort_by(|&a, &b| relevance[b].total_cmp(&relevance[a]).then(a.cmp(&b)));
        let mut keep_mask = vec![false; n];
        for &i in ranked.iter().take(keep) {
            keep_mask[i] = true;
        }
        let mut idx = 0;
        self.basis.kernels.retain(|_| {
            let kept = keep_mask[idx];
            idx += 1;
            kept
        });
        self.refit(storage)
    }

    /// Closed-form ridge refit over `storage` at the current basis: rebuilds
    /// `P = (I + Phi^T Phi)^-1` by streaming the Gram updates once, then
    /// installs per-class moments `B_c = Phi^T y_c` and weights `w = P B_c`.
    /// Every observation in `storage` counts as seen by each class state.
    pub fn refit(&mut self, storage: &[LabeledExample<f64>]) -> Result<()> {
        if storage.is_empty() {
            return Err(Error::EmptyInput {
                context: "refit storage",
            });
        }
        let k = self.basis.output_len();
        let class_count = self.classes.len();
        let mut shared = RlsState::<F>::init(k)?;
        let mut moments = vec![vec![F::zero(); k]; class_count];
        for ex in storage {
            if ex.label as usize >= class_count {
                return Err(Error::LabelOutOfRange {
                    label: ex.label,
                    class_count,
                });
            }
            let phi = self.eval_phi(&ex.features)?;
            if phi.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "refit kernel responses",
                });
            }
            shared.update_gram(&phi);
            let m = &mut moments[ex.label as usize];
            for (mv, &x) in m.iter_mut().zip(phi.iter()) {
                *mv += x;
            }
        }
        let seen = storage.len() as u64;
        for (state, b) in self.classes.iter_mut().zip(moments) {
            let mut fresh = shared.clone();
            fresh.install_moments(b, seen);
            *state = fresh;
        }
        Ok(())
    }
}
