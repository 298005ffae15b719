use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use vosmem::sim::sweep::parse_values;
use vosmem::sim::SweepAxis;
use vosmem_cli::check::check_metrics;
use vosmem_cli::{bench, load_config, parse_seeds, simulate, sweep_cmd, BenchOptions, LoadedConfig};

#[derive(Parser)]
#[command(name = "vosmem", version, about = "Quality-gated memory experiments on synthetic videos")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config, or the manifest.json of an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created when missing.
    #[arg(long)]
    out: PathBuf,
    /// Seeds overriding the config, e.g. `1,2,7` or `1-10`.
    #[arg(long)]
    seeds: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Segment every seed's video and write per-frame and summary tables.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Vary one policy parameter and tabulate mean scores per value.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// threshold, capacity or interval.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated values; capacity also accepts `unlimited`.
        #[arg(long)]
        values: Option<String>,
    },
    /// Time bounded against unlimited memory over long videos.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated video lengths, each at least 100.
        #[arg(long)]
        frames: Option<String>,
    },
    /// Compare J and F with their brute-force oracles on random masks.
    CheckMetrics {
        #[arg(long, default_value_t = 500)]
        pairs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write one row per pair to this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn usage_error(message: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::InvalidValue, message).exit()
}

fn load(common: &Common) -> Result<LoadedConfig> {
    let mut loaded = load_config(&common.config)?;
    if let Some(seeds) = &common.seeds {
        loaded.config.seeds = parse_seeds(seeds).unwrap_or_else(|e| usage_error(e));
    }
    Ok(loaded)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common } => {
            let loaded = load(&common)?;
            let results = simulate(&loaded.config, &common.out)?;
            for r in &results {
                println!("seed {:>4}  J {:.4}  F {:.4}  J&F {:.4}", r.seed, r.mean_j, r.mean_f, r.mean_jf);
            }
            println!("wrote {}", common.out.display());
        }
        Command::Sweep { common, axis, values } => {
            let loaded = load(&common)?;
            let from_manifest = loaded.manifest.as_ref();
            let axis = match axis.or_else(|| from_manifest.and_then(|m| m.axis.clone())) {
                Some(a) => a.parse::<SweepAxis>().unwrap_or_else(|e| usage_error(e)),
                None => usage_error("--axis is required"),
            };
            let values = match values.or_else(|| from_manifest.map(|m| m.values.join(","))) {
                Some(v) => parse_values(axis, &v).unwrap_or_else(|e| usage_error(e)),
                None => usage_error("--values is required"),
            };
            let rows = sweep_cmd(&loaded.config, axis, &values, &common.out)?;
            for row in &rows {
                println!("{axis} {:>9}  J {:.4}  F {:.4}  J&F {:.4}", row.value.to_string(), row.mean_j, row.mean_f, row.mean_jf);
            }
            println!("wrote {}", common.out.display());
        }
        Command::Bench { common, frames } => {
            let loaded = load(&common)?;
            let frames = match frames {
                Some(text) => text
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .unwrap_or_else(|e| usage_error(format!("bad frame count: {e}"))),
                None => match loaded.manifest.as_ref().filter(|m| !m.frames.is_empty()) {
                    Some(m) => m.frames.clone(),
                    None => vec![loaded.config.video.frames],
                },
            };
            if frames.is_empty() {
                usage_error("--frames needs at least one value");
            }
            let runs = bench(&loaded.config, &BenchOptions { frames }, &common.out)?;
            println!("timed {} runs, wrote {}", runs.len(), common.out.display());
        }
        Command::CheckMetrics { pairs, seed, out } => {
            let report = check_metrics(pairs, seed, out.as_deref()).context("metric check failed")?;
            println!(
                "{} pairs: {} J mismatches, max |F - oracle| = {:e}",
                report.pairs, report.j_mismatches, report.max_f_error
            );
            if !report.passed(1e-12) {
                bail!("metrics disagree with the oracles");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
