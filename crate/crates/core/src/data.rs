//! Labeled examples and in-memory datasets.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One observation: a dense feature vector and an integer class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample<F> {
    pub features: Vec<F>,
    pub label: u32,
}

impl<F> LabeledExample<F> {
    pub fn new(features: Vec<F>, label: u32) -> Self {
        Self { features, label }
    }
}

/// Which side of the train/test divide a dataset belongs to. Kept on the
/// dataset itself so evaluation paths can refuse training data by
/// construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Test,
}

/// An in-memory labeled dataset with fixed feature dimension and class count.
///
/// `image_shape` records the (rows, cols) layout when the data came from (or
/// is destined for) an image container; for flat feature data it is
/// `(feature_dim, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    pub examples: Vec<LabeledExample<F>>,
    pub class_count: usize,
    pub feature_dim: usize,
    pub split: SplitTag,
    pub image_shape: (u32, u32),
}

impl<F: Scalar> Dataset<F> {
    /// Builds a dataset, validating that every example matches `feature_dim`
    /// and every label is below `class_count`.
    pub fn new(
        examples: Vec<LabeledExample<F>>,
        class_count: usize,
        feature_dim: usize,
        split: SplitTag,
    ) -> Result<Self> {
        for ex in &examples {
            if ex.features.len() != feature_dim {
                return Err(Error::DimensionMismatch {
                    context: "dataset example features",
                    expected: feature_dim,
                    got: ex.features.len(),
                });
            }
            if ex.label as usize >= class_count {
                return Err(Error::LabelOutOfRange {
                    label: ex.label,
                    class_count,
                });
            }
        }
        Ok(Self {
            examples,
            class_count,
            feature_dim,
            split,
            image_shape: (feature_dim as u32, 1),
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Number of examples per class, indexed by label.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_count];
        for ex in &self.examples {
            counts[ex.label as usize] += 1;
        }
        counts
    }

    /// Keeps only the first `n` examples (useful for sub-sampling a large
    /// container into a desk-scale run). A no-op when `n >= len`.
    pub fn truncate(&mut self, n: usize) {
        self.examples.truncate(n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(features: Vec<f32>, label: u32) -> LabeledExample<f32> {
        LabeledExample::new(features, label)
    }

    #[test]
    fn validates_feature_dim() {
        let err = Dataset::new(vec![ex(vec![1.0, 2.0], 0)], 2, 3, SplitTag::Train).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { got: 2, .. }));
    }

    #[test]
    fn validates_labels() {
        let err = Dataset::new(vec![ex(vec![1.0], 2)], 2, 1, SplitTag::Train).unwrap_err();
        assert!(matches!(
            err,
            Error::LabelOutOfRange {
                label: 2,
                class_count: 2
            }
        ));
    }

    #[test]
    fn histogram_counts_labels() {
        let data = Dataset::new(
            vec![ex(vec![0.0], 0), ex(vec![1.0], 1), ex(vec![2.0], 1)],
            3,
            1,
            SplitTag::Train,
        )
        .unwrap();
        assert_eq!(data.class_histogram(), vec![1, 2, 0]);
    }
}
