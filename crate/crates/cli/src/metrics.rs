//! Metrics persistence: line-delimited JSON records, append-only during a
//! run, parsing back losslessly.
//!
//! Columns: `step` (instances seen when the record was written), `method`
//! (the deep method name, or `mhn-on-<method>` for fast-memory records),
//! `acc`, `per_class_acc`, `wall_ms` (processing time behind this record,
//! excluding evaluation), `ensemble_size` (models consulted at prediction
//! time), `kernel_count` (0 when fast memory is off). Within one method's
//! series, steps increase strictly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// One evaluation point of one method series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRecord {
    pub step: u64,
    pub method: String,
    pub acc: f64,
    pub per_class_acc: Vec<f64>,
    pub wall_ms: f64,
    pub ensemble_size: usize,
    pub kernel_count: usize,
}

/// Append-only JSONL writer; every record is flushed as it lands so a killed
/// run leaves a readable prefix.
pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path)
            .with_context(|| format!("creating metrics file {}", path.display()))?;
        Ok(Self { out: BufWriter::new(file) })
    }

    pub fn append(&mut self, record: &MetricsRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Reads a metrics file back into records, in file order.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let file =
        File::open(path).with_context(|| format!("opening metrics file {}", path.display()))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let record: MetricsRecord = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: malformed metrics record", path.display(), i + 1))?;
        records.push(record);
    }
    Ok(records)
}

/// Checks the record invariants: accuracies in [0, 1] and, within each
/// method's series, strictly increasing steps.
pub fn validate_series(records: &[MetricsRecord]) -> Result<()> {
    let mut last_step: Vec<(&str, u64)> = Vec::new();
    for r in records {
        if !(0.0..=1.0).contains(&r.acc) {
            bail!("method {} at step {}: accuracy {} outside [0, 1]", r.method, r.step, r.acc);
        }
        for (c, a) in r.per_class_acc.iter().enumerate() {
            if !(0.0..=1.0).contains(a) {
                bail!(
                    "method {} at step {}: class {c} accuracy {a} outside [0, 1]",
                    r.method,
                    r.step
                );
            }
        }
        match last_step.iter_mut().find(|(m, _)| *m == r.method) {
            Some((_, prev)) => {
                if r.step <= *prev {
                    bail!(
                        "method {} steps not strictly increasing: {} then {}",
                        r.method,
                        prev,
                        r.step
                    );
                }
                *prev = r.step;
            }
            None => last_step.push((&r.method, r.step)),
        }
    }
    Ok(())
}
