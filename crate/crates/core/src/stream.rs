//! Turning a dataset into an ordered sequence of stream chunks.
//!
//! Three chunking modes: a uniform shuffle into `k` near-equal chunks, a
//! two-way proportion split, and a class-mix schedule that states, per
//! chunk, which fraction of each class's examples arrive there. The builtin
//! ten-chunk schedule drifts a five-class window across ten classes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, LabeledExample};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance for "fractions sum to one" checks on schedule tables.
const MIX_EPS: f64 = 1e-9;

/// Per-chunk class mix: `mix[chunk]` lists `(class, fraction)` pairs, where
/// `fraction` is the share of that class's examples arriving in that chunk.
pub type ClassMix = Vec<Vec<(u32, f64)>>;

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleKind {
    /// Shuffle uniformly into `chunks` near-equal parts.
    Stationary { chunks: usize },
    /// Two chunks holding `proportion` and `1 - proportion` of the data.
    Two { proportion: f64 },
    /// Explicit per-chunk class fractions.
    ClassSchedule { mix: ClassMix },
}

/// A chunking recipe plus the seed that makes it reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSchedule {
    pub kind: ScheduleKind,
    pub seed: u64,
}

impl StreamSchedule {
    pub fn stationary(chunks: usize, seed: u64) -> Self {
        Self { kind: ScheduleKind::Stationary { chunks }, seed }
    }

    pub fn two(proportion: f64, seed: u64) -> Self {
        Self { kind: ScheduleKind::Two { proportion }, seed }
    }

    pub fn class_schedule(mix: ClassMix, seed: u64) -> Self {
        Self { kind: ScheduleKind::ClassSchedule { mix }, seed }
    }

    /// Materializes the chunk sequence for `data`.
    pub fn materialize<F: Scalar>(&self, data: &Dataset<F>) -> Result<Vec<Vec<LabeledExample<F>>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        match &self.kind {
            ScheduleKind::Stationary { chunks } => split_stationary(data, *chunks, &mut rng),
            ScheduleKind::Two { proportion } => {
                let (a, b) = split_two(data, *proportion, &mut rng)?;
                Ok(vec![a, b])
            }
            ScheduleKind::ClassSchedule { mix } => schedule_classes(data, mix, &mut rng),
        }
    }

    /// Number of chunks this schedule will produce.
    pub fn chunk_count(&self) -> usize {
        match &self.kind {
            ScheduleKind::Stationary { chunks } => *chunks,
            ScheduleKind::Two { .. } => 2,
            ScheduleKind::ClassSchedule { mix } => mix.len(),
        }
    }
}

/// Shuffles the dataset and cuts it into `k` near-equal chunks (the first
/// `len % k` chunks hold one extra example).
pub fn split_stationary<F: Scalar, R: Rng>(
    data: &Dataset<F>,
    k: usize,
    rng: &mut R,
) -> Result<Vec<Vec<LabeledExample<F>>>> {
    if k < 2 {
        return Err(Error::InvalidSplit {
            reason: format!("need at least 2 chunks, got {k}"),
        });
    }
    if k > data.len() {
        return Err(Error::InvalidSplit {
            reason: format!("cannot cut {} examples into {k} non-empty chunks", data.len()),
        });
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let base = data.len() / k;
    let extra = data.len() % k;
    let mut chunks = Vec::with_capacity(k);
    let mut cursor = 0usize;
    for c in 0..k {
        let size = base + usize::from(c < extra);
        let chunk = order[cursor..cursor + size]
            .iter()
            .map(|&i| data.examples[i].clone())
            .collect();
        cursor += size;
        chunks.push(chunk);
    }
    Ok(chunks)
}

/// Shuffles the dataset and cuts it into two chunks where the first holds
/// `floor(proportion * len)` examples.
pub fn split_two<F: Scalar, R: Rng>(
    data: &Dataset<F>,
    proportion: f64,
    rng: &mut R,
) -> Result<(Vec<LabeledExample<F>>, Vec<LabeledExample<F>>)> {
    if !(proportion > 0.0 && proportion < 1.0) {
        return Err(Error::InvalidSplit {
            reason: format!("proportion must lie strictly inside (0, 1), got {proportion}"),
        });
    }
    let first = (proportion * data.len() as f64).floor() as usize;
    if first == 0 || first == data.len() {
        return Err(Error::InvalidSplit {
            reason: format!(
                "proportion {proportion} leaves an empty side for {} examples",
                data.len()
            ),
        });
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let a = order[..first].iter().map(|&i| data.examples[i].clone()).collect();
    let b = order[first..].iter().map(|&i| data.examples[i].clone()).collect();
    Ok((a, b))
}

/// Distributes examples into chunks according to a per-chunk class-fraction
/// table. Each class's pool is shuffled once; chunk `c` then draws
/// `floor(fraction * pool_len)` examples for each `(class, fraction)` entry.
/// For classes whose fractions sum to one, rounding leftovers are appended
/// to the last chunk that uses the class, so such classes are consumed
/// completely. Chunks are shuffled so classes interleave within a chunk.
pub fn schedule_classes<F: Scalar, R: Rng>(
    data: &Dataset<F>,
    mix: &[Vec<(u32, f64)>],
    rng: &mut R,
) -> Result<Vec<Vec<LabeledExample<F>>>> {
    if mix.is_empty() {
        return Err(Error::EmptyInput { context: "class schedule" });
    }
    let class_count = data.class_count;
    let mut totals = vec![0.0f64; class_count];
    for entries in mix {
        for &(class, fraction) in entries {
            if class as usize >= class_count {
                return Err(Error::LabelOutOfRange { label: class, class_count });
            }
            if !fraction.is_finite() || fraction < 0.0 {
                return Err(Error::InvalidSplit {
                    reason: format!("fraction {fraction} for class {class} is not a finite non-negative number"),
                });
            }
            totals[class as usize] += fraction;
        }
    }
    for (class, &total) in totals.iter().enumerate() {
        if total > 1.0 + MIX_EPS {
            return Err(Error::OverAllocatedClass { class: class as u32, total });
        }
    }

    // Shuffled index pool per class; a cursor tracks consumption.
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); class_count];
    for (i, ex) in data.examples.iter().enumerate() {
        pools[ex.label as usize].push(i);
    }
    for pool in &mut pools {
        pool.shuffle(rng);
    }
    let mut cursors = vec![0usize; class_count];

    // Last chunk touching each fully-consumed class, for leftover flushing.
    let mut last_user: Vec<Option<usize>> = vec![None; class_count];
    for (chunk, entries) in mix.iter().enumerate() {
        for &(class, fraction) in entries {
            if fraction > 0.0 {
                last_user[class as usize] = Some(chunk);
            }
        }
    }

    let mut chunks: Vec<Vec<LabeledExample<F>>> = Vec::with_capacity(mix.len());
    for (chunk_id, entries) in mix.iter().enumerate() {
        let mut chunk = Vec::new();
        for &(class, fraction) in entries {
            let c = class as usize;
            let pool = &pools[c];
            let mut take = (fraction * pool.len() as f64).floor() as usize;
            let flush_leftovers =
                (totals[c] - 1.0).abs() <= MIX_EPS && last_user[c] == Some(chunk_id);
            if flush_leftovers {
                take = pool.len() - cursors[c];
            } else {
                take = take.min(pool.len() - cursors[c]);
            }
            for &i in &pool[cursors[c]..cursors[c] + take] {
                chunk.push(data.examples[i].clone());
            }
            cursors[c] += take;
        }
        chunk.shuffle(rng);
        chunks.push(chunk);
    }
    Ok(chunks)
}

/// The builtin ten-chunk drift schedule over ten classes. Early chunks hold
/// only the first three classes; a five-class window then slides one class
/// per chunk until the final chunks close out the last three classes. Every
/// chunk's fractions sum to 1 (equal chunk sizes on a balanced dataset) and
/// every class's fractions sum to 1 (each class is fully consumed).
pub fn builtin_drift_mix() -> ClassMix {
    let table: [&[(u32, f64)]; 10] = [
        &[(1, 0.4), (2, 0.4), (3, 0.2)],
        &[(1, 0.4), (2, 0.2), (3, 0.2), (4, 0.2)],
        &[(1, 0.2), (2, 0.2), (3, 0.2), (4, 0.2), (5, 0.2)],
        &[(2, 0.2), (3, 0.2), (4, 0.2), (5, 0.2), (6, 0.2)],
        &[(3, 0.2), (4, 0.2), (5, 0.2), (6, 0.2), (7, 0.2)],
        &[(4, 0.2), (5, 0.2), (6, 0.2), (7, 0.2), (8, 0.2)],
        &[(5, 0.2), (6, 0.2), (7, 0.2), (8, 0.2), (9, 0.2)],
        &[(6, 0.2), (7, 0.2), (8, 0.2), (9, 0.2), (10, 0.2)],
        &[(7, 0.2), (8, 0.2), (9, 0.3), (10, 0.3)],
        &[(8, 0.2), (9, 0.3), (10, 0.5)],
    ];
    table
        .iter()
        .map(|row| row.iter().map(|&(c, f)| (c - 1, f)).collect())
        .collect()
}

/// [`builtin_drift_mix`] wrapped as a schedule.
pub fn builtin_drift_schedule(seed: u64) -> StreamSchedule {
    StreamSchedule::class_schedule(builtin_drift_mix(), seed)
}
