//! The `emodan` command line.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::compare::compare;
use super::gradcheck::{format_results, run_suite};
use super::report::{evaluate, ReportSummary};
use crate::config::KeyValues;
use crate::dataset::{generate_synthetic, GenParams, LabelMap3};
use crate::train::{train_observed, TrainConfig, LAST_CHECKPOINT};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "emodan",
    version,
    about = "Joint facial landmark and emotion model toolkit"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output location.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic dataset into --out.
    Gen {
        /// Number of samples, overriding the config file.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train a model; --out is the checkpoint directory.
    Train {
        /// Dataset directory, overriding the config file.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// joint, emotion_only or landmark_only.
        #[arg(long)]
        mode: Option<String>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Any config key, as KEY=VALUE. Repeatable; wins over the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Print one line per epoch to stderr.
        #[arg(long)]
        verbose: bool,
    },
    /// Evaluate a checkpoint on a dataset and write reports into --out.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// surprised_positive or surprised_negative.
        #[arg(long)]
        label_map: Option<String>,
    },
    /// Compare two reports (files or report directories); writes into --out if given.
    Compare { a: PathBuf, b: PathBuf },
    /// Check analytic gradients against finite differences.
    Gradcheck {
        /// Number of seeds, starting at --seed.
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn require(value: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    value.ok_or_else(|| Error::invalid(format!("{what} is required")))
}

fn load_kv(path: Option<&Path>) -> Result<KeyValues> {
    match path {
        Some(p) => KeyValues::load(p),
        None => Ok(KeyValues::default()),
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let Common { seed, config, out } = cli.common;
    let mut kv = load_kv(config.as_deref())?;
    if let Some(s) = seed {
        kv.set("seed", s.to_string());
    }
    match cli.command {
        Command::Gen { count } => {
            if let Some(c) = count {
                kv.set("count", c.to_string());
            }
            let params = GenParams::from_kv(&kv)?;
            let out = require(out, "--out")?;
            let samples = generate_synthetic(&params, &out)?;
            println!("wrote {} samples to {}", samples.len(), out.display());
        }
        Command::Train {
            dataset,
            mode,
            resume,
            set,
            verbose,
        } => {
            for item in &set {
                let (k, v) = item.split_once('=').ok_or_else(|| {
                    Error::invalid(format!("--set expects KEY=VALUE, got `{item}`"))
                })?;
                kv.set(k.trim(), v.trim());
            }
            if let Some(d) = dataset {
                kv.set("dataset", d.to_string_lossy());
            }
            if let Some(m) = mode {
                kv.set("mode", m);
            }
            if let Some(r) = resume {
                kv.set("resume", r.to_string_lossy());
            }
            if let Some(o) = &out {
                kv.set("checkpoint_dir", o.to_string_lossy());
            }
            let config = TrainConfig::from_kv(&kv)?;
            let outcome = train_observed(&config, &mut |row| {
                if verbose {
                    eprintln!("{}", row.to_csv_line());
                }
            })?;
            println!(
                "trained {} epochs{}; checkpoints in {}",
                outcome.last.epoch,
                if outcome.stopped_early {
                    " (early stop)"
                } else {
                    ""
                },
                config.checkpoint_dir.display()
            );
        }
        Command::Eval {
            checkpoint,
            dataset,
            label_map,
        } => {
            kv.ensure_known(&["checkpoint", "dataset", "label_map_3", "seed"])?;
            let mut ckpt = kv.raw("checkpoint").map(PathBuf::from);
            let mut data = kv.raw("dataset").map(PathBuf::from);
            let mut map = LabelMap3::default();
            kv.get_into("label_map_3", &mut map)?;
            if checkpoint.is_some() {
                ckpt = checkpoint;
            }
            if dataset.is_some() {
                data = dataset;
            }
            if let Some(m) = label_map {
                map = m.parse()?;
            }
            let ckpt = require(ckpt, "--checkpoint")?;
            let data = require(data, "--dataset")?;
            let out = require(out, "--out")?;
            // Everything is validated and computed before the first file is created.
            let ckpt = if ckpt.is_dir() {
                ckpt.join(LAST_CHECKPOINT)
            } else {
                ckpt
            };
            let (report, records) = evaluate(&ckpt, &data, map)?;
            report.write(&records, &out)?;
            print!("{}", report.text());
        }
        Command::Compare { a, b } => {
            let cmp = compare(ReportSummary::read(&a)?, ReportSummary::read(&b)?)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                for (name, text) in [("compare.txt", cmp.text()), ("compare.csv", cmp.csv())] {
                    let path = dir.join(name);
                    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
                }
            }
            print!("{}", cmp.text());
        }
        Command::Gradcheck { seeds } => {
            if seeds == 0 {
                return Err(Error::invalid("--seeds must be at least 1"));
            }
            let results = run_suite(seed.unwrap_or(0), seeds)?;
            let table = format_results(&results);
            print!("{table}");
            let worst = results
                .iter()
                .max_by(|a, b| (a.worst / a.tolerance).total_cmp(&(b.worst / b.tolerance)))
                .expect("non-empty suite");
            println!(
                "worst relative error {:.3e} ({}, tolerance {:.0e})",
                worst.worst, worst.name, worst.tolerance
            );
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                let path = dir.join("gradcheck.txt");
                std::fs::write(&path, &table).map_err(|e| Error::io(&path, e))?;
            }
            let _ = std::io::stdout().flush();
            if results.iter().any(|r| !r.passed()) {
                eprintln!("error: gradient check failed");
                return Ok(2);
            }
        }
    }
    Ok(0)
}
