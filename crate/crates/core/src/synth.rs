//! Synthetic Gaussian classification data.
//!
//! Classes are unit-variance Gaussian blobs whose centers sit on a scaled
//! orthonormal frame, so every pair of centers is exactly `separation`
//! apart. The mixture variant gives each class several well-separated modes,
//! which makes the classes non-linearly-separable in input space.

use rand::Rng;

use crate::data::{Dataset, LabeledExample, SplitTag};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One draw from N(0, 1) via the Box-Muller transform.
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        if u1 <= f64::MIN_POSITIVE {
            continue;
        }
        let u2: f64 = rng.gen();
        return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
    }
}

/// `count` orthonormal vectors in `dim` dimensions via Gram-Schmidt on
/// Gaussian draws. Requires `count <= dim`.
fn orthonormal_frame<R: Rng>(count: usize, dim: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if count > dim {
        return Err(Error::InvalidSplit {
            reason: format!("cannot place {count} equidistant centers in {dim} dimensions"),
        });
    }
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(count);
    while frame.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
        for u in &frame {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= dot * ui;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-9 {
            continue; // astronomically rare; redraw
        }
        v.iter_mut().for_each(|x| *x /= norm);
        frame.push(v);
    }
    Ok(frame)
}

fn centers<R: Rng>(
    count: usize,
    dim: usize,
    separation: f64,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    // Orthonormal vectors scaled by s have pairwise distance s * sqrt(2);
    // scale so that distance equals `separation` exactly.
    let scale = separation / std::f64::consts::SQRT_2;
    let mut frame = orthonormal_frame(count, dim, rng)?;
    for v in &mut frame {
        v.iter_mut().for_each(|x| *x *= scale);
    }
    Ok(frame)
}

fn sample_blobs<F: Scalar, R: Rng>(
    cluster_centers: &[Vec<f64>],
    labels: &[u32],
    per_cluster: &[usize],
    class_count: usize,
    dim: usize,
    rng: &mut R,
) -> Result<Dataset<F>> {
    let total: usize = per_cluster.iter().sum();
    let mut examples = Vec::with_capacity(total);
    for ((center, &label), &n) in cluster_centers.iter().zip(labels).zip(per_cluster) {
        for _ in 0..n {
            let features = center
                .iter()
                .map(|&c| F::from_f64_lossy(c + standard_normal(rng)))
                .collect();
            examples.push(LabeledExample::new(features, label));
        }
    }
    // Interleave classes so prefixes of the dataset are class-balanced.
    use rand::seq::SliceRandom;
    examples.shuffle(rng);
    Dataset::new(examples, class_count, dim, SplitTag::Train)
}

fn check_common(class_count: usize, dim: usize, n_per_class: usize, separation: f64) -> Result<()> {
    if class_count == 0 || dim == 0 || n_per_class == 0 {
        return Err(Error::EmptyInput {
            context: "synthetic dataset shape",
        });
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::InvalidSplit {
            reason: format!("separation must be finite and >= 0, got {separation}"),
        });
    }
    Ok(())
}

/// Unimodal blobs: one unit-variance Gaussian per class, centers pairwise
/// `separation` apart, `n_per_class` examples each, shuffled.
pub fn synth_gaussian<F: Scalar, R: Rng>(
    class_count: usize,
    dim: usize,
    n_per_class: usize,
    separation: f64,
    rng: &mut R,
) -> Result<Dataset<F>> {
    check_common(class_count, dim, n_per_class, separation)?;
    let cluster_centers = centers(class_count, dim, separation, rng)?;
    let labels: Vec<u32> = (0..class_count as u32).collect();
    let per_cluster = vec![n_per_class; class_count];
    sample_blobs(&cluster_centers, &labels, &per_cluster, class_count, dim, rng)
}

/// Multimodal blobs: `modes_per_class` unit-variance Gaussians per class.
/// All `class_count * modes_per_class` mode centers are pairwise `separation`
/// apart, and mode `m` of the frame carries label `m % class_count`, so the
/// modes of one class are as far from each other as from other classes.
/// `n_per_class` examples per class, spread as evenly as possible over its
/// modes, shuffled.
pub fn synth_mixture<F: Scalar, R: Rng>(
    class_count: usize,
    modes_per_class: usize,
    dim: usize,
    n_per_class: usize,
    separation: f64,
    rng: &mut R,
) -> Result<Dataset<F>> {
    check_common(class_count, dim, n_per_class, separation)?;
    if modes_per_class == 0 {
        return Err(Error::EmptyInput {
            context: "modes per class",
        });
    }
    let cluster_count = class_count * modes_per_class;
    let cluster_centers = centers(cluster_count, dim, separation, rng)?;
    let labels: Vec<u32> = (0..cluster_count as u32)
        .map(|m| m % class_count as u32)
        .collect();
    // Spread each class's budget over its modes; earlier modes absorb the
    // remainder so per-class totals are exact.
    let base = n_per_class / modes_per_class;
    let extra = n_per_class % modes_per_class;
    let per_cluster: Vec<usize> = (0..cluster_count)
        .map(|m| base + usize::from(m / class_count < extra))
        .collect();
    sample_blobs(&cluster_centers, &labels, &per_cluster, class_count, dim, rng)
}
