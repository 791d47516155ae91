//! Command-line front end: run an experiment from a TOML config, evaluate a
//! saved checkpoint against a test set, or materialize a stream schedule to
//! inspect it.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use dualmem_cli::{eval_checkpoint, gen_stream, run_experiment_with, ExperimentConfig};

#[derive(Parser)]
#[command(name = "dualmem", about = "Dual-memory stream learning experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment described by a TOML config file.
    Run {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a saved checkpoint against an IDX test set.
    Eval {
        /// Path to a checkpoint written by `run`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory holding the IDX test image/label pair.
        #[arg(long)]
        test: PathBuf,
    },
    /// Materialize the configured stream into per-chunk manifests.
    GenStream {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Directory to write chunk manifests into.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Run { config } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let out = run_experiment_with(&cfg, |r| {
                println!(
                    "step {:>7}  {:<24} acc {:.4}  members {:>2}  kernels {:>5}  {:>9.1} ms",
                    r.step, r.method, r.acc, r.ensemble_size, r.kernel_count, r.wall_ms
                );
            })?;
            println!(
                "done: {} train / {} test instances, {} records",
                out.train_len,
                out.test_len,
                out.records.len()
            );
            println!("metrics:    {}", out.paths.metrics.display());
            println!("checkpoint: {}", out.paths.checkpoint.display());
            println!("manifest:   {}", out.paths.manifest.display());
            Ok(())
        }
        Cmd::Eval { checkpoint, test } => {
            let report = eval_checkpoint(&checkpoint, &test)?;
            println!("method:    {}", report.method);
            println!("test size: {}", report.test_len);
            println!("deep accuracy: {:.4}", report.deep_acc);
            for (k, acc) in report.deep_per_class.iter().enumerate() {
                println!("  class {k}: {acc:.4}");
            }
            if let Some(acc) = report.fast_acc {
                println!("fast accuracy: {acc:.4}");
                for (k, acc) in report.fast_per_class.iter().flatten().enumerate() {
                    println!("  class {k}: {acc:.4}");
                }
            }
            Ok(())
        }
        Cmd::GenStream { config, out } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let paths = gen_stream(&cfg, &out)?;
            for p in &paths {
                println!("{}", p.display());
            }
            println!("{} chunks written to {}", paths.len(), out.display());
            Ok(())
        }
    }
}
