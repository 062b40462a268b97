//! The `hatefuse` command line: `prepare`, `train`, `predict`, `fuse` and
//! `evaluate`, each reading and writing plain files under the run's output
//! directory.
//!
//! ```text
//! runs/
//!   label_distribution.tsv
//!   models/<model>/{model.json, weights.safetensors, manifest.txt, losses.tsv}
//!   predictions/<model>/<split>.<task>.json
//!   fused/<method>.<task>.json
//!   eval/<model>/{metrics.json, confusion.<task>.csv, confusion.<task>.png, errors.md}
//! ```
//!
//! Exit status is 0 on success, 1 for invalid input or configuration and 2
//! for runtime failures.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_evaluate, cmd_fuse, cmd_predict, cmd_prepare, cmd_train, model_dir, prepare_rows, resolve_ensemble, sanitize,
    EvaluateOutcome, FuseOptions, PredictRequest, Predictor, PrepareSummary, TrainOutcome,
};
pub use config::{
    deep_merge, presets, DataConfig, MetricsConfig, ModeName, ModelSection, Overrides, RunConfig, DATA_ROOT_ENV,
};

use crate::data::{DataFormat, SplitName};
use crate::ensemble::{FusionMethod, TieBreak};
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "hatefuse",
    version,
    about = "Train, fuse and score Bangla hate-speech classifiers"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Data file format, overriding detection from the extension.
    #[arg(long, global = true, value_name = "tsv|jsonl")]
    format: Option<DataFormat>,
    /// Training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Built-in preset applied beneath the configuration file; repeatable.
    #[arg(long = "preset", global = true, value_name = "NAME")]
    presets: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the data files and write label distributions.
    Prepare,
    /// Train a model on the train split.
    Train,
    /// Write per-task probability files for a split.
    Predict {
        /// Model directory; defaults to the configured model under the output directory.
        #[arg(long, value_name = "DIR", conflicts_with = "majority")]
        model: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: SplitName,
        /// Data file to predict instead of the configured one.
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
        /// Predict the most frequent train label.
        #[arg(long)]
        majority: bool,
    },
    /// Combine prediction files from several models.
    Fuse {
        #[arg(required = true, value_name = "FILE")]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        method: Option<FusionMethod>,
        /// Comma-separated member weights for weighted voting.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        #[arg(long, value_name = "soft-fallback|lowest-index")]
        tie_break: Option<TieBreak>,
    },
    /// Score prediction files against gold labels.
    Evaluate {
        #[arg(required = true, value_name = "FILE")]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "test")]
        split: SplitName,
        /// Gold file to score against instead of the configured one.
        #[arg(long, value_name = "FILE")]
        gold: Option<PathBuf>,
    },
    /// List the built-in presets.
    Presets,
}

fn execute(cli: Cli) -> Result<()> {
    let g = cli.global;
    if let Command::Presets = cli.command {
        for (name, about) in presets() {
            println!("{name:<16}{about}");
        }
        return Ok(());
    }
    let overrides = Overrides {
        presets: g.presets,
        seed: g.seed,
        out: g.out,
        format: g.format,
        ..Overrides::default()
    }
    .with_env();
    let cfg = RunConfig::load(g.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Prepare => {
            let s = cmd_prepare(&cfg)?;
            for (name, n, fp) in &s.splits {
                println!("{name}: {n} samples (data {fp})");
            }
            println!("wrote {}", s.table.display());
        }
        Command::Train => {
            let t = cmd_train(&cfg)?;
            let means = t.log.epoch_means();
            println!(
                "trained {} ({}) in {} steps, final epoch loss {:.4}",
                t.model.model_id(),
                t.model.fingerprint(),
                t.log.steps.len(),
                means.last().copied().unwrap_or(f64::NAN)
            );
            println!("wrote {}", t.model_dir.display());
        }
        Command::Predict {
            model,
            split,
            input,
            majority,
        } => {
            let (predictor, expected) = if majority {
                (Predictor::Majority, None)
            } else {
                let mc = cfg.model_config()?;
                let expected = g.config.is_some().then(|| mc.fingerprint());
                let dir = match model {
                    Some(dir) => dir,
                    None => model_dir(&cfg, &mc.model_id),
                };
                (Predictor::Model(dir), expected)
            };
            let req = PredictRequest {
                predictor,
                split,
                input,
                expected_fingerprint: expected,
            };
            for p in cmd_predict(&cfg, &req)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Fuse {
            inputs,
            method,
            weights,
            tie_break,
        } => {
            let opts = FuseOptions {
                method,
                weights,
                tie_break,
            };
            for p in cmd_fuse(&cfg, &inputs, &opts)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Evaluate { inputs, split, gold } => {
            let e = cmd_evaluate(&cfg, &inputs, split, gold.as_deref())?;
            for (task, f1) in &e.report.per_task_micro_f1 {
                println!("{task}\tmicro_f1 {f1:.4}");
            }
            if let Some(w) = &e.report.weighted_micro_f1 {
                println!("weighted\tmicro_f1 {:.4}", w.value);
            }
            println!("wrote {}", e.dir.display());
        }
        Command::Presets => unreachable!("handled above"),
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Same as [`run`] but returns the error instead of printing it.
pub fn try_run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    execute(cli)
}
