//! End-to-end checks of the experiment runner and the `dualmem` binary:
//! every artifact a run promises exists and round-trips, reruns are
//! deterministic, stream manifests match the schedule, and the binary
//! reports failures through its exit code.

use std::path::Path;
use std::process::Command;

use dualmem_cli::{
    eval_checkpoint, gen_stream, read_metrics, run_experiment, validate_series, ExperimentConfig,
    MetricsRecord, RunPaths,
};

/// A small drift run: three classes phased in and out over four chunks,
/// ensemble prior transfer, fast memory on top.
fn drift_toml(out_dir: &Path) -> String {
    format!(
        r#"
[dataset]
source = "synthetic"
classes = 3
modes_per_class = 2
dim = 8
train_per_class = 120
test_per_class = 40
separation = 6.0

[stream]
kind = "class-schedule"
mix = [
    [[0, 0.6], [1, 0.4]],
    [[0, 0.4], [1, 0.3], [2, 0.3]],
    [[1, 0.3], [2, 0.4]],
    [[2, 0.3]],
]

[method]
name = "neural-prior-ensemble"

[net]
hidden = [16]
weak_epochs = 8
batch_size = 16
momentum = 0.9
chunk_rate = 0.2
chunk_rate_decay_factor = 2.0
chunk_rate_drops = [6]
online_rate = 0.1
n_subset = 120
n_new = 120

[fast_memory]
enabled = true
kernels_per_block = 24

[run]
seed = 5
out_dir = "{}"
"#,
        out_dir.display()
    )
}

fn zero_wall(records: &[MetricsRecord]) -> Vec<MetricsRecord> {
    records
        .iter()
        .map(|r| MetricsRecord { wall_ms: 0.0, ..r.clone() })
        .collect()
}

#[test]
fn run_writes_outputs_and_eval_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml_str(&drift_toml(dir.path())).unwrap();
    let out = run_experiment(&cfg).unwrap();

    let paths = RunPaths::new(dir.path());
    assert_eq!(out.paths, paths);
    for p in [
        &paths.metrics,
        &paths.checkpoint,
        &paths.manifest,
        &paths.test_images,
        &paths.test_labels,
    ] {
        assert!(p.is_file(), "missing run artifact {}", p.display());
    }
    assert_eq!(out.train_len, 360);
    assert_eq!(out.test_len, 120);
    assert_eq!(out.deep.members().len(), 4, "one weak model per chunk");

    // The metrics file holds exactly the emitted records, losslessly.
    let on_disk = read_metrics(&paths.metrics).unwrap();
    assert_eq!(on_disk, out.records);
    validate_series(&on_disk).unwrap();
    // Both series reach the final step.
    let deep_last = on_disk.iter().rev().find(|r| r.method == "neural-prior-ensemble").unwrap();
    let fast_last = on_disk.iter().rev().find(|r| r.method == "mhn-on-neural-prior-ensemble").unwrap();
    assert_eq!(deep_last.step, 360);
    assert_eq!(fast_last.step, 360);
    assert!(fast_last.kernel_count > 0);

    // The manifest is valid JSON describing this run.
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&paths.manifest).unwrap()).unwrap();
    assert_eq!(manifest["method"], "neural-prior-ensemble");
    assert_eq!(manifest["dataset"]["train_len"], 360);
    assert_eq!(manifest["stream"]["chunk_sizes"], serde_json::json!([120, 120, 84, 36]));
    assert_eq!(manifest["outcome"]["final_members"], 4);

    // Scoring the checkpoint against the written test set reproduces the
    // final recorded accuracies.
    let report = eval_checkpoint(&paths.checkpoint, dir.path()).unwrap();
    assert_eq!(report.method, "neural-prior-ensemble");
    assert_eq!(report.test_len, 120);
    assert!(
        (report.deep_acc - deep_last.acc).abs() < 1e-9,
        "deep accuracy drifted across the checkpoint: {} vs {}",
        report.deep_acc,
        deep_last.acc
    );
    let fast_acc = report.fast_acc.expect("checkpoint carries a fast memory");
    assert!(
        (fast_acc - fast_last.acc).abs() < 1e-9,
        "fast accuracy drifted across the checkpoint: {fast_acc} vs {}",
        fast_last.acc
    );
}

#[test]
fn reruns_are_identical_modulo_wall_time() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let out_a =
        run_experiment(&ExperimentConfig::from_toml_str(&drift_toml(dir_a.path())).unwrap())
            .unwrap();
    let out_b =
        run_experiment(&ExperimentConfig::from_toml_str(&drift_toml(dir_b.path())).unwrap())
            .unwrap();

    assert_eq!(zero_wall(&out_a.records), zero_wall(&out_b.records));
    let disk_a = read_metrics(&out_a.paths.metrics).unwrap();
    let disk_b = read_metrics(&out_b.paths.metrics).unwrap();
    assert_eq!(zero_wall(&disk_a), zero_wall(&disk_b));

    // Checkpoints and test sets are byte-identical: nothing time- or
    // path-dependent leaks into them.
    let ck_a = std::fs::read(&out_a.paths.checkpoint).unwrap();
    let ck_b = std::fs::read(&out_b.paths.checkpoint).unwrap();
    assert_eq!(ck_a, ck_b);
    assert_eq!(
        std::fs::read(&out_a.paths.test_images).unwrap(),
        std::fs::read(&out_b.paths.test_images).unwrap()
    );
}

#[test]
fn gen_stream_materializes_chunk_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("stream");
    let toml = format!(
        r#"
[dataset]
source = "synthetic"
classes = 10
modes_per_class = 1
dim = 12
train_per_class = 30
test_per_class = 5
separation = 4.0

[stream]
kind = "builtin-drift"

[method]
name = "neural-prior-ensemble"

[net]
hidden = [8]
weak_epochs = 2
batch_size = 16
momentum = 0.9
chunk_rate = 0.1
online_rate = 0.05
n_subset = 30
n_new = 30

[run]
seed = 13
out_dir = "{}"
"#,
        dir.path().display()
    );
    let cfg = ExperimentConfig::from_toml_str(&toml).unwrap();
    let paths = gen_stream(&cfg, &out).unwrap();
    assert_eq!(paths.len(), 10);
    for (i, p) in paths.iter().enumerate() {
        assert!(p.ends_with(format!("chunk-{i:02}.tsv")), "{}", p.display());
    }

    // Balanced dataset + builtin schedule: ten equal chunks covering every
    // stream position exactly once, in order.
    let mut next_pos = 0u64;
    for p in &paths {
        let body = std::fs::read_to_string(p).unwrap();
        let mut lines = body.lines();
        assert_eq!(lines.next(), Some("# stream_pos\tlabel"));
        let mut rows = 0;
        for line in lines {
            let (pos, label) = line.split_once('\t').unwrap();
            assert_eq!(pos.parse::<u64>().unwrap(), next_pos);
            assert!(label.parse::<u32>().unwrap() < 10);
            next_pos += 1;
            rows += 1;
        }
        assert_eq!(rows, 30, "balanced chunks hold one class-worth each");
    }
    assert_eq!(next_pos, 300);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("stream.json")).unwrap()).unwrap();
    assert_eq!(summary["chunk_count"], 10);
    assert_eq!(summary["chunk_sizes"], serde_json::json!(vec![30; 10]));
}

#[test]
fn missing_config_error_names_the_path() {
    let err = ExperimentConfig::from_path(Path::new("/nonexistent/exp.toml")).unwrap_err();
    assert!(format!("{err:#}").contains("/nonexistent/exp.toml"), "{err:#}");
}

#[test]
fn binary_runs_evaluates_and_reports_failures() {
    let bin = env!("CARGO_BIN_EXE_dualmem");
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let cfg_path = dir.path().join("exp.toml");
    let toml = format!(
        r#"
[dataset]
source = "synthetic"
classes = 2
modes_per_class = 1
dim = 4
train_per_class = 40
test_per_class = 10
separation = 6.0

[stream]
kind = "stationary"
chunks = 2

[method]
name = "naive-ensemble"

[net]
hidden = [8]
weak_epochs = 2
batch_size = 16
momentum = 0.9
chunk_rate = 0.1
online_rate = 0.05
n_subset = 40
n_new = 40

[run]
seed = 3
out_dir = "{}"
"#,
        out_dir.display()
    );
    std::fs::write(&cfg_path, toml).unwrap();

    // A successful run exits 0 and prints the artifact paths.
    let run = Command::new(bin).args(["run", "--config"]).arg(&cfg_path).output().unwrap();
    assert!(run.status.success(), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("metrics.jsonl"), "{stdout}");
    assert!(out_dir.join("final.ckpt").is_file());

    // Evaluating the run's checkpoint against its own test set succeeds.
    let eval = Command::new(bin)
        .args(["eval", "--checkpoint"])
        .arg(out_dir.join("final.ckpt"))
        .arg("--test")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(eval.status.success(), "stderr: {}", String::from_utf8_lossy(&eval.stderr));
    assert!(String::from_utf8_lossy(&eval.stdout).contains("deep accuracy"));

    // A missing config is a clean failure: exit 1, error on stderr.
    let missing = Command::new(bin)
        .args(["run", "--config", "/nonexistent/exp.toml"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&missing.stderr);
    assert!(stderr.contains("error:") && stderr.contains("/nonexistent/exp.toml"), "{stderr}");

    // An unknown subcommand is a usage error (clap's exit code 2).
    let usage = Command::new(bin).arg("frobnicate").output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
}
