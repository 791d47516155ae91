//! Multiplicative feature kernels.
//!
//! A kernel is a small tuple of distinct feature indices; its value on a
//! feature vector is the product of the selected entries. The basis tracks
//! which contiguous index ranges ("blocks") came from which source model so
//! new kernels can be targeted at freshly added features. Evaluation always
//! appends a constant 1 so downstream regressions carry a bias term.

use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};

/// Contiguous slice of the concatenated feature space contributed by one
/// source model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureBlock {
    pub model_id: u64,
    pub start: usize,
    pub len: usize,
}

impl FeatureBlock {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

/// Shared multiplicative-kernel basis: index tuples over a growing
/// concatenated feature space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelBasis {
    /// Sorted distinct indices per kernel.
    pub kernels: Vec<Vec<usize>>,
    pub feature_dim: usize,
    pub blocks: Vec<FeatureBlock>,
}

impl KernelBasis {
    /// Empty basis over a zero-dimensional feature space; blocks arrive via
    /// [`KernelBasis::add_block`].
    pub fn empty() -> Self {
        Self {
            kernels: Vec::new(),
            feature_dim: 0,
            blocks: Vec::new(),
        }
    }

    /// Number of components [`KernelBasis::eval`] produces: one per kernel
    /// plus the trailing constant bias.
    pub fn output_len(&self) -> usize {
        self.kernels.len() + 1
    }

    /// Registers `width` new feature indices owned by `model_id` and returns
    /// the index range they occupy.
    pub fn add_block(&mut self, model_id: u64, width: usize) -> Result<Range<usize>> {
        if width == 0 {
            return Err(Error::EmptyInput {
                context: "feature block width",
            });
        }
        let start = self.feature_dim;
        self.blocks.push(FeatureBlock {
            model_id,
            start,
            len: width,
        });
        self.feature_dim += width;
        Ok(start..self.feature_dim)
    }

    /// Kernel responses for one feature vector, bias component last.
    pub fn eval(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                context: "kernel evaluation input",
                expected: self.feature_dim,
                got: features.len(),
            });
        }
        let mut out = Vec::with_capacity(self.output_len());
        for kernel in &self.kernels {
            let mut prod = 1.0;
            for &i in kernel {
                prod *= features[i];
            }
            out.push(prod);
        }
        out.push(1.0);
        Ok(out)
    }
}

/// Draws `count` kernels of `order` distinct indices over a `feature_dim`
/// space. With `restrict_to` set, every tuple includes at least one index
/// from that range (used to aim new kernels at a freshly added block).
/// Distinct tuples may repeat across the sample.
pub fn sample_kernels<R: Rng + ?Sized>(
    feature_dim: usize,
    count: usize,
    order: usize,
    restrict_to: Option<Range<usize>>,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if order == 0 {
        return Err(Error::EmptyInput {
            context: "kernel order",
        });
    }
    if order > feature_dim {
        return Err(Error::KernelOrderTooLarge { order, feature_dim });
    }
    if let Some(range) = &restrict_to {
        if range.is_empty() || range.end > feature_dim {
            return Err(Error::InvalidSplit {
                reason: format!(
                    "kernel restriction {range:?} outside feature space of dim {feature_dim}"
                ),
            });
        }
    }

    let mut kernels = Vec::with_capacity(count);
    let mut tuple = Vec::with_capacity(order);
    for _ in 0..count {
        tuple.clear();
        if let Some(range) = &restrict_to {
            tuple.push(rng.gen_range(range.clone()));
        }
        while tuple.len() < order {
            let idx = rng.gen_range(0..feature_dim);
            if !tuple.contains(&idx) {
                tuple.push(idx);
            }
        }
        let mut sorted = tuple.clone();
        sorted.sort_unstable();
        kernels.push(sorted);
    }
    Ok(kernels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn pair_basis() -> KernelBasis {
        let mut basis = KernelBasis::empty();
        basis.add_block(0, 2).unwrap();
        basis.kernels.push(vec![0, 1]);
        basis
    }

    #[test]
    fn eval_multiplies_selected_entries_and_appends_bias() {
        let basis = pair_basis();
        assert_eq!(basis.eval(&[2.0, 3.0]).unwrap(), vec![6.0, 1.0]);
    }

    #[test]
    fn zero_vector_keeps_only_the_bias() {
        let mut basis = pair_basis();
        basis.kernels.push(vec![0, 1]);
        assert_eq!(basis.eval(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn order_two_kernels_scale_quadratically() {
        let basis = pair_basis();
        let v = [1.7, -0.4];
        let scaled: Vec<f64> = v.iter().map(|x| 3.0 * x).collect();
        let base = basis.eval(&v).unwrap();
        let big = basis.eval(&scaled).unwrap();
        assert!((big[0] - 9.0 * base[0]).abs() < 1e-12);
        assert_eq!(big[1], 1.0);
    }

    #[test]
    fn eval_rejects_wrong_dimension() {
        let basis = pair_basis();
        assert!(matches!(
            basis.eval(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1, .. })
        ));
    }

    #[test]
    fn empty_basis_evaluates_to_bias_only() {
        let basis = KernelBasis::empty();
        assert_eq!(basis.eval(&[]).unwrap(), vec![1.0]);
    }

    #[test]
    fn blocks_partition_the_feature_space() {
        let mut basis = KernelBasis::empty();
        assert_eq!(basis.add_block(7, 3).unwrap(), 0..3);
        assert_eq!(basis.add_block(9, 2).unwrap(), 3..5);
        assert_eq!(basis.feature_dim, 5);
        let mut covered = 0;
        for b in &basis.blocks {
            assert_eq!(b.start, covered);
            covered += b.len;
        }
        assert_eq!(covered, basis.feature_dim);
    }

    #[test]
    fn sampled_tuples_are_distinct_sorted_and_in_range() {
        let mut rng = StdRng::seed_from_u64(11);
        let kernels = sample_kernels(10, 200, 2, None, &mut rng).unwrap();
        assert_eq!(kernels.len(), 200);
        for k in &kernels {
            assert_eq!(k.len(), 2);
            assert!(k[0] < k[1], "indices must be distinct and sorted: {k:?}");
            assert!(k[1] < 10);
        }
    }

    #[test]
    fn restricted_samples_touch_the_range() {
        let mut rng = StdRng::seed_from_u64(13);
        let kernels = sample_kernels(64, 500, 2, Some(48..64), &mut rng).unwrap();
        for k in &kernels {
            assert!(
                k.iter().any(|&i| (48..64).contains(&i)),
                "kernel {k:?} misses the restricted range"
            );
        }
        // Both in-range and cross-block pairs should occur.
        assert!(kernels.iter().any(|k| k.iter().any(|&i| i < 48)));
    }

    #[test]
    fn tiny_space_forces_the_single_possible_pair() {
        let mut rng = StdRng::seed_from_u64(1);
        let kernels = sample_kernels(2, 5, 2, None, &mut rng).unwrap();
        for k in kernels {
            assert_eq!(k, vec![0, 1]);
        }
    }

    #[test]
    fn impossible_orders_are_rejected() {
        let mut rng = StdRng::seed_from_u64(1);
        assert!(matches!(
            sample_kernels(2, 1, 3, None, &mut rng),
            Err(Error::KernelOrderTooLarge { .. })
        ));
        assert!(sample_kernels(2, 1, 0, None, &mut rng).is_err());
    }
}
