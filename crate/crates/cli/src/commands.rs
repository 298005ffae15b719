//! The `simulate`, `sweep` and `bench` commands, minus argument parsing.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use vosmem::sim::sweep::apply;
use vosmem::sim::{run_seed, sweep, EvalResult, RunConfig, SweepAxis, SweepRow, SweepValue};
use vosmem::EvictionMode;

use crate::manifest::RunManifest;
use crate::output::{self, BenchBucket};

pub const BENCH_BUCKET: usize = 100;

fn prepare_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))
}

fn run_all(config: &RunConfig) -> Result<Vec<EvalResult>> {
    config
        .seeds
        .iter()
        .map(|&seed| run_seed(config, seed).with_context(|| format!("seed {seed} failed")))
        .collect()
}

/// Runs every seed and writes `frames.csv`, `summary.csv` and the manifest.
pub fn simulate(config: &RunConfig, out: &Path) -> Result<Vec<EvalResult>> {
    config.validate()?;
    prepare_dir(out)?;
    let results = run_all(config)?;
    output::write_frames(&out.join(output::FRAMES_FILE), &results)?;
    output::write_summary(&out.join(output::SUMMARY_FILE), &results)?;
    RunManifest::new(
        "simulate",
        config,
        vec![output::FRAMES_FILE.into(), output::SUMMARY_FILE.into()],
    )
    .write(out)?;
    Ok(results)
}

/// Runs one row per axis value and writes `sweep.csv` and the manifest.
pub fn sweep_cmd(
    config: &RunConfig,
    axis: SweepAxis,
    values: &[SweepValue],
    out: &Path,
) -> Result<Vec<SweepRow>> {
    config.validate()?;
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    for &value in values {
        apply(config, value)
            .validate()
            .with_context(|| format!("{axis} = {value} is not a valid setting"))?;
    }
    prepare_dir(out)?;
    let rows = sweep(config, values)?;
    output::write_sweep(&out.join(output::SWEEP_FILE), axis.as_str(), &rows)?;
    let mut manifest = RunManifest::new("sweep", config, vec![output::SWEEP_FILE.into()]);
    manifest.axis = Some(axis.as_str().to_string());
    manifest.values = values.iter().map(ToString::to_string).collect();
    manifest.write(out)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    /// Video lengths to time; each must be at least one bucket long.
    pub frames: Vec<usize>,
}

/// One timed run of the bench command.
#[derive(Debug, Clone)]
pub struct BenchRun {
    pub mode: String,
    pub frames: usize,
    pub result: EvalResult,
}

fn with_length(config: &RunConfig, frames: usize) -> RunConfig {
    let mut c = config.clone();
    c.video.frames = frames;
    if let Some(custom) = c.video.custom.as_mut() {
        custom.frame_count = frames;
    }
    c
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Groups runs of the same mode and length into 100-frame buckets.
pub fn bucket_stats(runs: &[BenchRun]) -> Vec<BenchBucket> {
    let mut buckets = Vec::new();
    let mut keys: Vec<(String, usize)> = Vec::new();
    for run in runs {
        let key = (run.mode.clone(), run.frames);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    for (mode, frames) in keys {
        let group: Vec<&BenchRun> = runs
            .iter()
            .filter(|r| r.mode == mode && r.frames == frames)
            .collect();
        for start in (0..frames).step_by(BENCH_BUCKET) {
            let end = (start + BENCH_BUCKET).min(frames);
            let mut times = Vec::new();
            let mut sizes = Vec::new();
            for run in &group {
                for r in &run.result.frames[start..end] {
                    times.push(r.wall_time * 1e3);
                    sizes.push(r.bank_size);
                }
            }
            times.sort_by(f64::total_cmp);
            buckets.push(BenchBucket {
                mode: mode.clone(),
                frames,
                start,
                end,
                mean_bank_size: sizes.iter().sum::<usize>() as f64 / sizes.len() as f64,
                max_bank_size: sizes.iter().copied().max().unwrap_or(0),
                p10_ms: percentile(&times, 0.1),
                p50_ms: percentile(&times, 0.5),
                p90_ms: percentile(&times, 0.9),
            });
        }
    }
    buckets
}

/// Times the capacity-bounded policy of `config` against unlimited memory
/// for each video length and writes `bench.csv`, `bench_frames.csv` and the
/// manifest. An unlimited config is benchmarked with dynamic eviction as
/// its bounded mode.
pub fn bench(config: &RunConfig, options: &BenchOptions, out: &Path) -> Result<Vec<BenchRun>> {
    config.validate()?;
    if options.frames.is_empty() {
        bail!("bench needs at least one frame count");
    }
    if let Some(&f) = options.frames.iter().find(|&&f| f < BENCH_BUCKET) {
        bail!("frame count {f} is below the minimum of {BENCH_BUCKET}");
    }
    prepare_dir(out)?;
    let mut bounded = config.clone();
    if bounded.policy.eviction == EvictionMode::Unlimited {
        bounded.policy.eviction = EvictionMode::Dynamic;
    }
    let mut unlimited = config.clone();
    unlimited.policy.eviction = EvictionMode::Unlimited;
    let bounded_name = format!("bounded_{}", bounded.policy.capacity);

    let mut runs = Vec::new();
    for &frames in &options.frames {
        for (mode, base) in [(bounded_name.as_str(), &bounded), ("unlimited", &unlimited)] {
            let c = with_length(base, frames);
            for result in run_all(&c)? {
                runs.push(BenchRun {
                    mode: mode.to_string(),
                    frames,
                    result,
                });
            }
        }
    }
    output::write_bench(&out.join(output::BENCH_FILE), &bucket_stats(&runs))?;
    let rows: Vec<_> = runs
        .iter()
        .map(|r| (r.mode.clone(), r.frames, r.result.clone()))
        .collect();
    output::write_bench_frames(&out.join(output::BENCH_FRAMES_FILE), &rows)?;
    let mut manifest = RunManifest::new(
        "bench",
        config,
        vec![output::BENCH_FILE.into(), output::BENCH_FRAMES_FILE.into()],
    );
    manifest.frames = options.frames.clone();
    manifest.write(out)?;
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentiles() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.5), 5.0);
        assert_eq!(percentile(&v, 0.9), 9.0);
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&[3.0], 0.5), 3.0);
        assert!(percentile(&[], 0.5).is_nan());
    }
}
