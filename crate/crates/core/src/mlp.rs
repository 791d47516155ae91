//! Dense feed-forward classifier networks and their training loop.
//!
//! The model is deliberately plain: ReLU hidden layers, softmax output,
//! mean cross-entropy loss, SGD with classical momentum. Weights live in
//! row-major `(out_dim, in_dim)` matrices. Everything is generic over
//! [`Scalar`] so the same code trains in `f32` and replays in `f64` for
//! gradient checks.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::LabeledExample;

/// Learning-rate schedule.
///
/// * `InvSqrt` decays as `base / sqrt(t)` in continuous time `t >= 1`; used by
///   the sliding online learner where `t` grows with data consumed.
/// * `StepDecay` divides `base` by `factor` at each listed drop epoch; used by
///   epoch-budgeted (re)training.
#[derive(Debug, Clone, PartialEq)]
pub enum LrSchedule<F> {
    InvSqrt { base: F },
    StepDecay { base: F, factor: F, drops: Vec<usize> },
}

impl<F: Scalar> LrSchedule<F> {
    pub fn inv_sqrt(base: F) -> Result<Self> {
        if !(base.is_finite() && base > F::zero()) {
            return Err(Error::InvalidSchedule {
                reason: format!("base rate must be positive and finite, got {base}"),
            });
        }
        Ok(LrSchedule::InvSqrt { base })
    }

    /// `drops` are epoch indices (sorted internally); reaching epoch `d`
    /// divides the rate by `factor` once per drop point passed.
    pub fn step_decay(base: F, factor: F, mut drops: Vec<usize>) -> Result<Self> {
        if !(base.is_finite() && base > F::zero()) {
            return Err(Error::InvalidSchedule {
                reason: format!("base rate must be positive and finite, got {base}"),
            });
        }
        if !(factor.is_finite() && factor >= F::one()) {
            return Err(Error::InvalidSchedule {
                reason: format!("decay factor must be >= 1 and finite, got {factor}"),
            });
        }
        drops.sort_unstable();
        Ok(LrSchedule::StepDecay { base, factor, drops })
    }

    /// Rate at continuous progress `t`. For `InvSqrt` this is the native
    /// clock (`t > 0` required); for `StepDecay`, `t` is truncated to an
    /// epoch index.
    pub fn rate_at_time(&self, t: f64) -> Result<F> {
        match self {
            LrSchedule::InvSqrt { base } => {
                if !(t > 0.0) {
                    return Err(Error::InvalidSchedule {
                        reason: format!("inverse-sqrt schedule needs positive progress, got {t}"),
                    });
                }
                Ok(*base / F::from_f64_lossy(t).sqrt())
            }
            LrSchedule::StepDecay { .. } => {
                if t < 0.0 {
                    return Err(Error::InvalidSchedule {
                        reason: format!("negative progress {t}"),
                    });
                }
                Ok(self.rate_at_epoch(t as usize))
            }
        }
    }

    /// Rate at a discrete epoch index (0-based). `InvSqrt` treats epoch `e`
    /// as time `e + 1` so epoch 0 runs at `base`.
    pub fn rate_at_epoch(&self, epoch: usize) -> F {
        match self {
            LrSchedule::InvSqrt { base } => *base / F::from_usize(epoch + 1).unwrap().sqrt(),
            LrSchedule::StepDecay { base, factor, drops } => {
                let passed = drops.iter().filter(|&&d| d <= epoch).count();
                let mut rate = *base;
                for _ in 0..passed {
                    rate = rate / *factor;
                }
                rate
            }
        }
    }
}

/// One dense layer plus its momentum state.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    /// Row-major `(out_dim, in_dim)`.
    pub weights: Vec<F>,
    pub bias: Vec<F>,
    pub momentum_w: Vec<F>,
    pub momentum_b: Vec<F>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl<F: Scalar> Layer<F> {
    /// Scaled-uniform init: weights from `U(-1/sqrt(in_dim), 1/sqrt(in_dim))`,
    /// biases zero, momentum zero.
    fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| F::from_f64_lossy(rng.gen_range(-scale..scale)))
            .collect();
        Layer {
            weights,
            bias: vec![F::zero(); out_dim],
            momentum_w: vec![F::zero(); in_dim * out_dim],
            momentum_b: vec![F::zero(); out_dim],
            in_dim,
            out_dim,
        }
    }

    fn row(&self, i: usize) -> &[F] {
        &self.weights[i * self.in_dim..(i + 1) * self.in_dim]
    }

    /// `out = W x + b`. Caller guarantees `x.len() == in_dim`.
    fn affine_into(&self, x: &[F], out: &mut Vec<F>) {
        debug_assert_eq!(x.len(), self.in_dim);
        out.clear();
        for i in 0..self.out_dim {
            let mut acc = self.bias[i];
            for (w, v) in self.row(i).iter().zip(x.iter()) {
                acc = acc + *w * *v;
            }
            out.push(acc);
        }
    }
}

/// Per-layer gradient of the mean cross-entropy loss.
#[derive(Debug, Clone)]
pub struct LayerGradient<F> {
    pub dw: Vec<F>,
    pub db: Vec<F>,
}

/// Gradients for one minibatch, with the batch size that produced them (the
/// optimizer counts processed examples from it).
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    pub layers: Vec<LayerGradient<F>>,
    pub batch_len: usize,
    pub mean_loss: F,
}

/// Activations recorded by a forward pass: `activations[0]` is the input,
/// `activations[i]` the post-ReLU output of hidden layer `i`, and `probs`
/// the softmax class distribution.
#[derive(Debug, Clone)]
pub struct ForwardPass<F> {
    pub activations: Vec<Vec<F>>,
    pub probs: Vec<F>,
}

/// Feed-forward softmax classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    pub layers: Vec<Layer<F>>,
    pub layer_dims: Vec<usize>,
    /// Training examples processed so far (drives time-based schedules).
    pub steps_seen: u64,
}

impl<F: Scalar> Mlp<F> {
    /// Fresh network with the given layer widths (input first, classes last).
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArchitecture { dims: dims.to_vec() });
        }
        let layers = dims
            .windows(2)
            .map(|w| Layer::init(w[0], w[1], rng))
            .collect();
        Ok(Mlp {
            layers,
            layer_dims: dims.to_vec(),
            steps_seen: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Width of the final hidden layer (the features the fast memory taps).
    pub fn hidden_dim(&self) -> usize {
        self.layer_dims[self.layer_dims.len() - 2]
    }

    /// Copy of this network in another scalar width (used by 64-bit replays).
    pub fn cast<G: Scalar>(&self) -> Mlp<G> {
        let conv = |xs: &[F]| xs.iter().map(|x| G::from_f64_lossy(x.to_f64_lossy())).collect();
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: conv(&l.weights),
                    bias: conv(&l.bias),
                    momentum_w: conv(&l.momentum_w),
                    momentum_b: conv(&l.momentum_b),
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                })
                .collect(),
            layer_dims: self.layer_dims.clone(),
            steps_seen: self.steps_seen,
        }
    }

    fn check_input(&self, x: &[F]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Full forward pass with recorded activations.
    pub fn forward(&self, x: &[F]) -> Result<ForwardPass<F>> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        let mut probs = Vec::new();
        self.forward_into(&mut activations, &mut probs, 1);
        Ok(ForwardPass { activations, probs })
    }

    /// Class probabilities for one input.
    pub fn predict_proba(&self, x: &[F]) -> Result<Vec<F>> {
        Ok(self.forward(x)?.probs)
    }

    /// Final hidden-layer activations (identical to the corresponding entry
    /// of [`Mlp::forward`]'s activations).
    pub fn hidden_features(&self, x: &[F]) -> Result<Vec<F>> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        self.forward_hidden(&mut activations, 1);
        Ok(activations.pop().unwrap())
    }

    /// Runs hidden layers, pushing each post-ReLU activation. `activations`
    /// must start with the input at index `start - 1`.
    fn forward_hidden(&self, activations: &mut Vec<Vec<F>>, start: usize) {
        debug_assert_eq!(activations.len(), start);
        for layer in &self.layers[..self.layers.len() - 1] {
            let mut out = Vec::new();
            layer.affine_into(activations.last().unwrap(), &mut out);
            for v in out.iter_mut() {
                if *v < F::zero() {
                    *v = F::zero();
                }
            }
            activations.push(out);
        }
    }

    fn forward_into(&self, activations: &mut Vec<Vec<F>>, probs: &mut Vec<F>, start: usize) {
        self.forward_hidden(activations, start);
        let last = self.layers.last().unwrap();
        last.affine_into(activations.last().unwrap(), probs);
        softmax_in_place(probs);
    }

    /// Mean cross-entropy gradients over a batch. The forward activations are
    /// recomputed internally; nothing in the model changes.
    pub fn loss_gradients(&self, batch: &[LabeledExample<F>]) -> Result<Gradients<F>> {
        if batch.is_empty() {
            return Err(Error::EmptyInput {
                context: "gradient batch",
            });
        }
        let classes = self.class_count();
        for ex in batch {
            self.check_input(&ex.features)?;
            if ex.label as usize >= classes {
                return Err(Error::LabelOutOfRange {
                    label: ex.label,
                    class_count: classes,
                });
            }
        }

        let mut grads: Vec<LayerGradient<F>> = self
            .layers
            .iter()
            .map(|l| LayerGradient {
                dw: vec![F::zero(); l.weights.len()],
                db: vec![F::zero(); l.bias.len()],
            })
            .collect();
        let mut loss_sum = F::zero();

        // Reused per-example buffers.
        let mut activations: Vec<Vec<F>> = Vec::with_capacity(self.layers.len());
        let mut probs: Vec<F> = Vec::new();
        let mut delta: Vec<F> = Vec::new();
        let mut delta_prev: Vec<F> = Vec::new();

        for ex in batch {
            activations.clear();
            activations.push(ex.features.clone());
            self.forward_into(&mut activations, &mut probs, 1);

            let y = ex.label as usize;
            let tiny = F::from_f64_lossy(1e-300_f64.max(f64::MIN_POSITIVE));
            loss_sum = loss_sum - probs[y].max(tiny).ln();

            // Output error: softmax probabilities minus the one-hot target.
            delta.clear();
            delta.extend(probs.iter().copied());
            delta[y] = delta[y] - F::one();

            for (l, layer) in self.layers.iter().enumerate().rev() {
                let input = &activations[l];
                let g = &mut grads[l];
                for (i, &d) in delta.iter().enumerate() {
                    g.db[i] += d;
                    let row = &mut g.dw[i * layer.in_dim..(i + 1) * layer.in_dim];
                    for (gw, &a) in row.iter_mut().zip(input.iter()) {
                        *gw += d * a;
                    }
                }
                if l == 0 {
                    break; // input gradient is never needed
                }
                // delta_prev = W^T delta, masked by ReLU'(hidden activation)
                delta_prev.clear();
                delta_prev.resize(layer.in_dim, F::zero());
                for (i, &d) in delta.iter().enumerate() {
                    for (dp, &w) in delta_prev.iter_mut().zip(layer.row(i).iter()) {
                        *dp += d * w;
                    }
                }
                for (dp, &a) in delta_prev.iter_mut().zip(input.iter()) {
                    if a <= F::zero() {
                        *dp = F::zero();
                    }
                }
                std::mem::swap(&mut delta, &mut delta_prev);
            }
        }

        let inv_b = F::one() / F::from_usize(batch.len()).unwrap();
        for g in &mut grads {
            for v in g.dw.iter_mut() {
                *v *= inv_b;
            }
            for v in g.db.iter_mut() {
                *v *= inv_b;
            }
        }
        Ok(Gradients {
            layers: grads,
            batch_len: batch.len(),
            mean_loss: loss_sum * inv_b,
        })
    }

    /// One momentum-SGD step:
    /// `buffer <- momentum * buffer - lr * grad; weight <- weight + buffer`.
    /// Counts `grads.batch_len` examples into `steps_seen`. Rejects
    /// non-finite gradients (the usual sign of a diverged run).
    pub fn sgd_step(&mut self, grads: &Gradients<F>, lr: F, momentum: F) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::DimensionMismatch {
                context: "gradient layer count",
                expected: self.layers.len(),
                got: grads.layers.len(),
            });
        }
        for (layer, g) in self.layers.iter().zip(&grads.layers) {
            if g.dw.len() != layer.weights.len() || g.db.len() != layer.bias.len() {
                return Err(Error::DimensionMismatch {
                    context: "gradient shape",
                    expected: layer.weights.len(),
                    got: g.dw.len(),
                });
            }
            if g.dw.iter().chain(g.db.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "gradient entries",
                });
            }
        }
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for ((v, w), &gw) in layer
                .momentum_w
                .iter_mut()
                .zip(layer.weights.iter_mut())
                .zip(g.dw.iter())
            {
                *v = momentum * *v - lr * gw;
                *w = *w + *v;
            }
            for ((v, b), &gb) in layer
                .momentum_b
                .iter_mut()
                .zip(layer.bias.iter_mut())
                .zip(g.db.iter())
            {
                *v = momentum * *v - lr * gb;
                *b = *b + *v;
            }
        }
        self.steps_seen += grads.batch_len as u64;
        Ok(())
    }

    /// One pass over `data` in a fresh shuffled order at a fixed rate.
    pub fn train_one_epoch<R: Rng + ?Sized>(
        &mut self,
        data: &[LabeledExample<F>],
        rate: F,
        momentum: F,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<()> {
        if data.is_empty() {
            return Err(Error::EmptyInput {
                context: "training epoch data",
            });
        }
        if batch_size == 0 {
            return Err(Error::EmptyInput {
                context: "batch size",
            });
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        rand::seq::SliceRandom::shuffle(&mut order[..], rng);
        let mut batch: Vec<LabeledExample<F>> = Vec::with_capacity(batch_size);
        for chunk in order.chunks(batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            let grads = self.loss_gradients(&batch)?;
            self.sgd_step(&grads, rate, momentum)?;
        }
        Ok(())
    }

    /// Epoch-budgeted training: epoch `e` runs at `schedule.rate_at_epoch(e)`.
    pub fn train_epochs<R: Rng + ?Sized>(
        &mut self,
        data: &[LabeledExample<F>],
        schedule: &LrSchedule<F>,
        epochs: usize,
        momentum: F,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<()> {
        if epochs == 0 {
            return Ok(());
        }
        for e in 0..epochs {
            let rate = schedule.rate_at_epoch(e);
            self.train_one_epoch(data, rate, momentum, batch_size, rng)?;
        }
        Ok(())
    }
}

/// Warm-start for a new network: copies every layer of `source` except the
/// final one, re-randomizes the final layer, zeroes all momentum, and resets
/// the step counter. The copied layers are bit-identical to the source's.
pub fn transfer_init<F: Scalar, R: Rng + ?Sized>(source: &Mlp<F>, rng: &mut R) -> Result<Mlp<F>> {
    let mut model = source.clone();
    let last = model.layers.len() - 1;
    model.layers[last] = Layer::init(source.layers[last].in_dim, source.layers[last].out_dim, rng);
    for layer in &mut model.layers {
        layer.momentum_w.iter_mut().for_each(|v| *v = F::zero());
        layer.momentum_b.iter_mut().for_each(|v| *v = F::zero());
    }
    model.steps_seen = 0;
    Ok(model)
}

/// Numerically stable softmax, in place.
fn softmax_in_place<F: Scalar>(z: &mut [F]) {
    let max = z.iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v = *v / sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn ex<F: Scalar>(features: Vec<F>, label: u32) -> LabeledExample<F> {
        LabeledExample::new(features, label)
    }

    fn small_batch(rng: &mut StdRng, n: usize, dim: usize, classes: u32) -> Vec<LabeledExample<f64>> {
        (0..n)
            .map(|_| {
                let features = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                ex(features, rng.gen_range(0..classes))
            })
            .collect()
    }

    // -- schedules -----------------------------------------------------------

    #[test]
    fn inv_sqrt_matches_closed_form() {
        let s = LrSchedule::inv_sqrt(0.01f64).unwrap();
        assert_eq!(s.rate_at_time(1.0).unwrap(), 0.01);
        assert!((s.rate_at_time(4.0).unwrap() - 0.005).abs() < 1e-15);
    }

    #[test]
    fn inv_sqrt_rejects_nonpositive_progress() {
        let s = LrSchedule::inv_sqrt(0.01f64).unwrap();
        assert!(s.rate_at_time(0.0).is_err());
        assert!(s.rate_at_time(-3.0).is_err());
    }

    #[test]
    fn step_decay_drops_after_each_drop_point() {
        let s = LrSchedule::step_decay(0.01f64, 10.0, vec![30]).unwrap();
        assert_eq!(s.rate_at_epoch(0), 0.01);
        assert_eq!(s.rate_at_epoch(29), 0.01);
        assert!((s.rate_at_epoch(30) - 0.001).abs() < 1e-15);
        assert!((s.rate_at_epoch(31) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn inv_sqrt_is_strictly_decreasing() {
        let s = LrSchedule::inv_sqrt(0.5f64).unwrap();
        let mut prev = f64::INFINITY;
        for t in 1..200 {
            let r = s.rate_at_time(t as f64).unwrap();
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn step_decay_is_piecewise_constant_and_nonincreasing() {
        let s = LrSchedule::step_decay(0.1f64, 10.0, vec![3, 7]).unwrap();
        let rates: Vec<f64> = (0..12).map(|e| s.rate_at_epoch(e)).collect();
        for w in rates.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let distinct: std::collections::BTreeSet<u64> = rates.iter().map(|r| r.to_bits()).collect();
        assert_eq!(distinct.len(), 3);
    }

    #[test]
    fn degenerate_schedule_parameters_are_rejected() {
        assert!(LrSchedule::inv_sqrt(0.0f64).is_err());
        assert!(LrSchedule::inv_sqrt(f64::NAN).is_err());
        assert!(LrSchedule::step_decay(0.1f64, 0.5, vec![]).is_err());
        assert!(LrSchedule::step_decay(-0.1f64, 10.0, vec![]).is_err());
    }

    // -- init ----------------------------------------------------------------

    #[test]
    fn init_builds_expected_shapes() {
        let mut rng = StdRng::seed_from_u64(0);
        let m = Mlp::<f32>::init(&[4, 3, 2], &mut rng).unwrap();
        assert_eq!(m.layers.len(), 2);
        assert_eq!(m.layers[0].weights.len(), 12);
        assert_eq!(m.layers[0].bias.len(), 3);
        assert_eq!(m.layers[1].weights.len(), 6);
        assert_eq!(m.layers[1].bias.len(), 2);
        assert_eq!(m.steps_seen, 0);
        assert!(m.layers.iter().all(|l| l.momentum_w.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn init_rejects_degenerate_architectures() {
        let mut rng = StdRng::seed_from_u64(0);
        assert!(matches!(
            Mlp::<f32>::init(&[4], &mut rng),
            Err(Error::InvalidArchitecture { .. })
        ));
        assert!(Mlp::<f32>::init(&[4, 0, 2], &mut rng).is_err());
        assert!(Mlp::<f32>::init(&[], &mut rng).is_err());
    }

    #[test]
    fn init_weight_spread_tracks_fan_in() {
        // Empirical std of U(-a, a) is a/sqrt(3); assert each layer lands
        // within [0.5, 1.5] * 1/sqrt(fan_in), a loose band that still catches
        // an unscaled init.
        let mut rng = StdRng::seed_from_u64(1);
        let m = Mlp::<f32>::init(&[784, 100, 10], &mut rng).unwrap();
        for layer in &m.layers {
            let n = layer.weights.len() as f64;
            let mean: f64 = layer.weights.iter().map(|w| *w as f64).sum::<f64>() / n;
            let var: f64 = layer
                .weights
                .iter()
                .map(|w| (*w as f64 - mean).powi(2))
                .sum::<f64>()
                / n;
            let std = var.sqrt();
            let scale = 1.0 / (layer.in_dim as f64).sqrt();
            assert!(
                std > 0.5 * scale && std < 1.5 * scale,
                "std {std} outside [{}, {}]",
                0.5 * scale,
                1.5 * scale
            );
        }
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let a = Mlp::<f32>::init(&[6, 5, 3], &mut StdRng::seed_from_u64(9)).unwrap();
        let b = Mlp::<f32>::init(&[6, 5, 3], &mut StdRng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    // -- forward -------------------------------------------------------------

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let mut rng = StdRng::seed_from_u64(0);
        let mut m = Mlp::<f32>::init(&[3, 4, 5], &mut rng).unwrap();
        for l in &mut m.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        let probs = m.predict_proba(&[0.3, -0.2, 0.9]).unwrap();
        for p in probs {
            assert!((p - 0.2).abs() < 1e-6);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = StdRng::seed_from_u64(3);
        let m = Mlp::<f32>::init(&[5, 8, 7], &mut rng).unwrap();
        let x: Vec<f32> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let probs = m.predict_proba(&x).unwrap();
        let sum: f32 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn softmax_is_invariant_to_output_bias_shift() {
        let mut rng = StdRng::seed_from_u64(4);
        let m = Mlp::<f32>::init(&[4, 6, 3], &mut rng).unwrap();
        let mut shifted = m.clone();
        let last = shifted.layers.len() - 1;
        shifted.layers[last].bias.iter_mut().for_each(|b| *b += 3.7);
        let x = [0.1, -0.4, 0.8, 0.2];
        let a = m.predict_proba(&x).unwrap();
        let b = shifted.predict_proba(&x).unwrap();
        for (pa, pb) in a.iter().zip(&b) {
            assert!((pa - pb).abs() <= 1e-5 * pa.abs().max(*pb), "{pa} vs {pb}");
        }
        // When the shifted logits are exactly representable, max subtraction
        // cancels the shift to the bit.
        let mut z = [0.5f32, 1.0, -0.25];
        let mut z_shift = [0.5f32 + 4.0, 1.0 + 4.0, -0.25 + 4.0];
        softmax_in_place(&mut z);
        softmax_in_place(&mut z_shift);
        assert_eq!(z, z_shift);
    }

    #[test]
    fn forward_rejects_wrong_input_dim() {
        let mut rng = StdRng::seed_from_u64(0);
        let m = Mlp::<f32>::init(&[4, 3, 2], &mut rng).unwrap();
        assert!(matches!(
            m.forward(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 4, got: 2, .. })
        ));
    }

    #[test]
    fn hidden_features_match_forward_activations() {
        let mut rng = StdRng::seed_from_u64(5);
        let m = Mlp::<f32>::init(&[6, 9, 4, 3], &mut rng).unwrap();
        let x: Vec<f32> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pass = m.forward(&x).unwrap();
        let hidden = m.hidden_features(&x).unwrap();
        assert_eq!(hidden.len(), 4);
        assert_eq!(hidden, *pass.activations.last().unwrap());
    }

    #[test]
    fn zero_weight_hidden_features_are_zero() {
        let mut rng = StdRng::seed_from_u64(0);
        let mut m = Mlp::<f32>::init(&[3, 5, 2], &mut rng).unwrap();
        m.layers[0].weights.iter_mut().for_each(|w| *w = 0.0);
        assert_eq!(m.hidden_features(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 5]);
    }

    // -- gradients -----------------------------------------------------------

    /// Independent loss route for finite differences: forward pass only, mean
    /// negative log-probability of the labels.
    fn mean_loss_by_forward(m: &Mlp<f64>, batch: &[LabeledExample<f64>]) -> f64 {
        let mut sum = 0.0;
        for e in batch {
            let p = m.predict_proba(&e.features).unwrap();
            sum -= p[e.label as usize].max(1e-300).ln();
        }
        sum / batch.len() as f64
    }

    #[test]
    fn backprop_matches_central_finite_differences() {
        let mut rng = StdRng::seed_from_u64(12);
        let m = Mlp::<f64>::init(&[5, 4, 3], &mut rng).unwrap();
        let batch = small_batch(&mut rng, 3, 5, 3);
        let grads = m.loss_gradients(&batch).unwrap();

        let h = 1e-5;
        for (li, layer) in m.layers.iter().enumerate() {
            for wi in 0..layer.weights.len() {
                let mut plus = m.clone();
                plus.layers[li].weights[wi] += h;
                let mut minus = m.clone();
                minus.layers[li].weights[wi] -= h;
                let numeric =
                    (mean_loss_by_forward(&plus, &batch) - mean_loss_by_forward(&minus, &batch))
                        / (2.0 * h);
                let analytic = grads.layers[li].dw[wi];
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    (analytic - numeric).abs() / denom < 1e-4,
                    "layer {li} weight {wi}: analytic {analytic} vs numeric {numeric}"
                );
            }
            for bi in 0..layer.bias.len() {
                let mut plus = m.clone();
                plus.layers[li].bias[bi] += h;
                let mut minus = m.clone();
                minus.layers[li].bias[bi] -= h;
                let numeric =
                    (mean_loss_by_forward(&plus, &batch) - mean_loss_by_forward(&minus, &batch))
                        / (2.0 * h);
                let analytic = grads.layers[li].db[bi];
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                assert!((analytic - numeric).abs() / denom < 1e-4);
            }
        }
    }

    #[test]
    fn perfect_prediction_has_vanishing_gradient() {
        let mut rng = StdRng::seed_from_u64(2);
        let mut m = Mlp::<f32>::init(&[3, 4, 2], &mut rng).unwrap();
        // Saturate the output toward class 0 regardless of input.
        let last = m.layers.len() - 1;
        m.layers[last].bias[0] = 60.0;
        let batch = vec![ex(vec![0.5, -0.5, 0.25], 0)];
        let grads = m.loss_gradients(&batch).unwrap();
        let norm: f32 = grads
            .layers
            .iter()
            .flat_map(|g| g.dw.iter().chain(g.db.iter()))
            .map(|v| v * v)
            .sum::<f32>()
            .sqrt();
        assert!(norm < 1e-6, "gradient norm {norm}");
    }

    #[test]
    fn duplicating_the_batch_leaves_the_mean_gradient_unchanged() {
        let mut rng = StdRng::seed_from_u64(8);
        let m = Mlp::<f64>::init(&[4, 5, 3], &mut rng).unwrap();
        let batch = small_batch(&mut rng, 4, 4, 3);
        let doubled: Vec<_> = batch.iter().chain(batch.iter()).cloned().collect();
        let g1 = m.loss_gradients(&batch).unwrap();
        let g2 = m.loss_gradients(&doubled).unwrap();
        for (a, b) in g1.layers.iter().zip(&g2.layers) {
            for (x, y) in a.dw.iter().zip(&b.dw) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_batch_errors() {
        let mut rng = StdRng::seed_from_u64(0);
        let m = Mlp::<f32>::init(&[2, 3, 2], &mut rng).unwrap();
        assert!(matches!(
            m.loss_gradients(&[]),
            Err(Error::EmptyInput { .. })
        ));
        assert!(matches!(
            m.loss_gradients(&[ex(vec![1.0, 2.0], 5)]),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    // -- optimizer -----------------------------------------------------------

    #[test]
    fn zero_momentum_step_is_plain_descent() {
        let mut rng = StdRng::seed_from_u64(0);
        let mut m = Mlp::<f64>::init(&[2, 2], &mut rng).unwrap();
        let before = m.layers[0].weights.clone();
        let grads = m
            .loss_gradients(&[ex(vec![1.0, -1.0], 0)])
            .unwrap();
        m.sgd_step(&grads, 0.1, 0.0).unwrap();
        for ((w_after, w_before), g) in m.layers[0]
            .weights
            .iter()
            .zip(&before)
            .zip(&grads.layers[0].dw)
        {
            assert!((w_after - (w_before - 0.1 * g)).abs() < 1e-15);
        }
        assert_eq!(m.steps_seen, 1);
    }

    #[test]
    fn zero_rate_with_fresh_buffers_changes_nothing() {
        let mut rng = StdRng::seed_from_u64(1);
        let mut m = Mlp::<f64>::init(&[2, 3, 2], &mut rng).unwrap();
        let before = m.clone();
        let grads = m.loss_gradients(&[ex(vec![0.2, 0.4], 1)]).unwrap();
        m.sgd_step(&grads, 0.0, 0.9).unwrap();
        for (la, lb) in m.layers.iter().zip(&before.layers) {
            assert_eq!(la.weights, lb.weights);
            assert_eq!(la.momentum_w, lb.momentum_w);
        }
        assert_eq!(m.steps_seen, before.steps_seen + 1);
    }

    #[test]
    fn two_momentum_steps_match_the_hand_unrolled_recurrence() {
        // v1 = -lr*g1; w1 = w0 + v1; v2 = mu*v1 - lr*g2; w2 = w1 + v2.
        let mut rng = StdRng::seed_from_u64(7);
        let mut m = Mlp::<f64>::init(&[3, 2], &mut rng).unwrap();
        let w0 = m.layers[0].weights.clone();
        let b1 = vec![ex(vec![0.3, -0.1, 0.6], 0)];
        let b2 = vec![ex(vec![-0.2, 0.8, 0.1], 1)];
        let (lr, mu) = (0.05, 0.9);

        let g1 = m.loss_gradients(&b1).unwrap();
        m.sgd_step(&g1, lr, mu).unwrap();
        let g2 = m.loss_gradients(&b2).unwrap();
        m.sgd_step(&g2, lr, mu).unwrap();

        for i in 0..w0.len() {
            let v1 = -lr * g1.layers[0].dw[i];
            let w1 = w0[i] + v1;
            let v2 = mu * v1 - lr * g2.layers[0].dw[i];
            let w2 = w1 + v2;
            assert!((m.layers[0].weights[i] - w2).abs() < 1e-7);
            assert!((m.layers[0].momentum_w[i] - v2).abs() < 1e-7);
        }
        assert_eq!(m.steps_seen, 2);
    }

    #[test]
    fn non_finite_gradients_are_rejected() {
        let mut rng = StdRng::seed_from_u64(0);
        let mut m = Mlp::<f32>::init(&[2, 2], &mut rng).unwrap();
        let mut grads = m.loss_gradients(&[ex(vec![1.0, 1.0], 0)]).unwrap();
        grads.layers[0].dw[0] = f32::NAN;
        assert!(matches!(
            m.sgd_step(&grads, 0.1, 0.9),
            Err(Error::NonFinite { .. })
        ));
    }

    // -- training loop -------------------------------------------------------

    fn two_blob_data(rng: &mut StdRng, n_per_class: usize) -> Vec<LabeledExample<f32>> {
        let mut data = Vec::new();
        for label in 0..2u32 {
            let center = if label == 0 { -2.0 } else { 2.0 };
            for _ in 0..n_per_class {
                let features = (0..4)
                    .map(|_| center + rng.gen_range(-1.0..1.0))
                    .collect();
                data.push(ex(features, label));
            }
        }
        data
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let mut rng = StdRng::seed_from_u64(0);
        let mut m = Mlp::<f32>::init(&[4, 3, 2], &mut rng).unwrap();
        let before = m.clone();
        let schedule = LrSchedule::step_decay(0.01, 10.0, vec![]).unwrap();
        m.train_epochs(&[], &schedule, 0, 0.9, 8, &mut rng).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn training_on_empty_data_errors() {
        let mut rng = StdRng::seed_from_u64(0);
        let mut m = Mlp::<f32>::init(&[4, 3, 2], &mut rng).unwrap();
        let schedule = LrSchedule::step_decay(0.01, 10.0, vec![]).unwrap();
        assert!(m.train_epochs(&[], &schedule, 1, 0.9, 8, &mut rng).is_err());
    }

    #[test]
    fn learns_linearly_separable_blobs() {
        let mut rng = StdRng::seed_from_u64(21);
        let data = two_blob_data(&mut rng, 100);
        let mut m = Mlp::<f32>::init(&[4, 8, 2], &mut rng).unwrap();
        let schedule = LrSchedule::step_decay(0.05, 10.0, vec![20]).unwrap();
        m.train_epochs(&data, &schedule, 25, 0.9, 16, &mut rng).unwrap();
        let correct = data
            .iter()
            .filter(|e| {
                let p = m.predict_proba(&e.features).unwrap();
                let pred = if p[1] > p[0] { 1 } else { 0 };
                pred == e.label
            })
            .count();
        let acc = correct as f64 / data.len() as f64;
        assert!(acc >= 0.99, "train accuracy {acc}");
        assert_eq!(m.steps_seen, 25 * 200);
    }

    #[test]
    fn training_is_deterministic_for_a_fixed_seed() {
        let run = || {
            let mut rng = StdRng::seed_from_u64(77);
            let data = two_blob_data(&mut rng, 30);
            let mut m = Mlp::<f32>::init(&[4, 6, 2], &mut rng).unwrap();
            let schedule = LrSchedule::step_decay(0.05, 10.0, vec![]).unwrap();
            m.train_epochs(&data, &schedule, 5, 0.9, 8, &mut rng).unwrap();
            m
        };
        assert_eq!(run(), run());
    }

    // -- transfer ------------------------------------------------------------

    #[test]
    fn transfer_copies_all_but_the_final_layer_exactly() {
        let mut rng = StdRng::seed_from_u64(30);
        let mut source = Mlp::<f32>::init(&[6, 5, 4, 3], &mut rng).unwrap();
        // Give the source some non-trivial momentum and step state.
        let data = vec![ex((0..6).map(|i| i as f32 / 6.0).collect(), 1)];
        let g = source.loss_gradients(&data).unwrap();
        source.sgd_step(&g, 0.1, 0.9).unwrap();

        let fresh = transfer_init(&source, &mut rng).unwrap();
        for (a, b) in fresh.layers.iter().zip(&source.layers).take(2) {
            assert_eq!(a.weights, b.weights, "non-final layers must copy bit-for-bit");
            assert_eq!(a.bias, b.bias);
        }
        let last = source.layers.len() - 1;
        assert_ne!(fresh.layers[last].weights, source.layers[last].weights);
        assert!(fresh
            .layers
            .iter()
            .all(|l| l.momentum_w.iter().all(|&v| v == 0.0) && l.momentum_b.iter().all(|&v| v == 0.0)));
        assert_eq!(fresh.steps_seen, 0);
        assert_ne!(source.steps_seen, 0);
    }

    #[test]
    fn transfer_with_different_seeds_differs_only_in_the_final_layer() {
        let mut rng = StdRng::seed_from_u64(31);
        let source = Mlp::<f32>::init(&[5, 4, 3], &mut rng).unwrap();
        let a = transfer_init(&source, &mut StdRng::seed_from_u64(1)).unwrap();
        let b = transfer_init(&source, &mut StdRng::seed_from_u64(2)).unwrap();
        assert_eq!(a.layers[0].weights, b.layers[0].weights);
        assert_ne!(a.layers[1].weights, b.layers[1].weights);
    }

    #[test]
    fn transfer_on_two_layer_net_keeps_only_the_first_layer() {
        let mut rng = StdRng::seed_from_u64(32);
        let source = Mlp::<f32>::init(&[4, 5, 2], &mut rng).unwrap();
        let fresh = transfer_init(&source, &mut rng).unwrap();
        assert_eq!(fresh.layers[0].weights, source.layers[0].weights);
        assert_ne!(fresh.layers[1].weights, source.layers[1].weights);
    }

    // -- cast ----------------------------------------------------------------

    #[test]
    fn cast_preserves_values_up_to_width() {
        let mut rng = StdRng::seed_from_u64(40);
        let m = Mlp::<f32>::init(&[3, 4, 2], &mut rng).unwrap();
        let wide: Mlp<f64> = m.cast();
        for (a, b) in m.layers.iter().zip(&wide.layers) {
            for (x, y) in a.weights.iter().zip(&b.weights) {
                assert_eq!(*x as f64, *y);
            }
        }
        assert_eq!(wide.steps_seen, m.steps_seen);
    }
}
