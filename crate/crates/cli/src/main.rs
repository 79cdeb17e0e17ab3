// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use tsmem_cli::config::{RunConfig, ENV_OUTPUT_DIR, ENV_WORKERS};
use tsmem_cli::pipeline;
use tsmem_core::eval::SweepAxis;
use tsmem_core::synth::{anomaly_suite, SynthSpec};

/// Memory-bank nearest-neighbor anomaly detection over time-series embeddings.
#[derive(Debug, Parser)]
#[command(name = "tsmem", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Precedence, lowest first: defaults, `--config`, environment, flags, `--set`.
#[derive(Debug, Args)]
struct GlobalArgs {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Dataset files or glob patterns, comma-separated.
    #[arg(long, global = true)]
    datasets: Option<String>,
    /// `center`, `last`, or a patch index.
    #[arg(long, global = true)]
    reference_patch: Option<String>,
    /// `synthetic` or `trep`.
    #[arg(long, global = true)]
    source: Option<String>,
    #[arg(long, global = true)]
    trep_dir: Option<String>,
    #[arg(long, global = true)]
    layer: Option<String>,
    /// Maximum bank size, or `unbounded`.
    #[arg(long, global = true)]
    coreset: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// `euclidean`, `mahalanobis` or `density`.
    #[arg(long, global = true)]
    distance: Option<String>,
    /// `on` or `off`.
    #[arg(long, global = true)]
    ttamb: Option<String>,
    #[arg(long, global = true, env = ENV_OUTPUT_DIR)]
    output_dir: Option<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = ENV_WORKERS)]
    workers: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build each dataset's memory bank and write it under `<output_dir>/banks`.
    BuildMemory,
    /// Score test windows against previously built banks.
    Score,
    /// Run the full pipeline and write an aggregate report.
    Eval,
    /// Repeat `eval` once per value of one configuration axis.
    Sweep {
        /// layer, reference_patch, coreset, distance or ttamb.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Write a seeded suite of sine series with one labeled anomaly each.
    /// Uses the global `--seed`.
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 4000)]
        length: usize,
        #[arg(long, default_value_t = 2000)]
        train_end: usize,
    },
    /// Print the resolved configuration.
    ShowConfig,
}

impl GlobalArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("datasets", &self.datasets),
            ("reference_patch", &self.reference_patch),
            ("source", &self.source),
            ("trep_dir", &self.trep_dir),
            ("layer", &self.layer),
            ("coreset", &self.coreset),
            ("seed", &self.seed),
            ("distance", &self.distance),
            ("ttamb", &self.ttamb),
            ("output_dir", &self.output_dir),
            ("workers", &self.workers),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        for assignment in &self.overrides {
            config.apply_override(assignment)?;
        }
        Ok(config)
    }
}

fn report_failures(failed: &[tsmem_core::eval::FailedDataset], total: usize) -> Result<()> {
    for f in failed {
        eprintln!("error: {}: {}", f.name, f.error);
    }
    if !failed.is_empty() {
        bail!("{} of {} datasets failed", failed.len(), total);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Command::SynthData {
        out,
        count,
        length,
        train_end,
    } = &cli.command
    {
        let spec = SynthSpec {
            length: *length,
            train_end: *train_end,
            ..SynthSpec::default()
        };
        if spec.train_end + spec.lead + spec.tail + 80 > spec.length {
            bail!("--length {length} leaves no room for an anomaly after --train-end {train_end}");
        }
        let seed = cli.global.resolve()?.seed;
        for record in anomaly_suite(*count, seed, &spec) {
            let path = record.write_ucr(out)?;
            println!("{}", path.display());
        }
        return Ok(());
    }

    let config = cli.global.resolve()?;
    match cli.command {
        Command::ShowConfig => print!("{}", config.to_text()),
        Command::BuildMemory => {
            let outcome = pipeline::cmd_build_memory(&config)?;
            for (name, stats) in &outcome.done {
                println!(
                    "{name}: {} -> {} items (reduction {:.3})",
                    stats.size_before, stats.size_after, stats.reduction_ratio
                );
            }
            report_failures(&outcome.failed, outcome.done.len() + outcome.failed.len())?;
        }
        Command::Score => {
            let outcome = pipeline::cmd_score(&config)?;
            for r in &outcome.done {
                println!(
                    "{}: {} scores, {} insertions",
                    r.dataset, r.defined_scores, r.insertion_count
                );
            }
            report_failures(&outcome.failed, outcome.done.len() + outcome.failed.len())?;
        }
        Command::Eval => {
            let report = pipeline::cmd_eval(&config)?;
            print!("{}", report.to_table());
            println!("wrote {}", config.output_dir.join("report.json").display());
            report_failures(&report.failed, report.datasets + report.failed.len())?;
        }
        Command::Sweep { axis, values } => {
            let points = pipeline::cmd_sweep(&config, axis, &values)?;
            for p in &points {
                println!(
                    "{axis}={}: top-1 {:.1}% ({}/{})",
                    p.value, p.report.top1_accuracy_pct, p.report.hits, p.report.datasets
                );
            }
            let failed: Vec<_> = points.iter().flat_map(|p| p.report.failed.clone()).collect();
            let total = points.iter().map(|p| p.report.datasets + p.report.failed.len()).sum();
            report_failures(&failed, total)?;
        }
        Command::SynthData { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
