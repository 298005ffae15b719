//! CSV tables. All files have a header row and `\n` line endings; columns
//! named `wall_time_s` or ending in `_ms` hold timings and are the only
//! nondeterministic values.

use std::fs::File;
use std::path::Path;

use anyhow::{Context, Result};
use csv::{Terminator, Writer, WriterBuilder};
use vosmem::sim::{EvalResult, SweepRow};

pub const FRAMES_FILE: &str = "frames.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const BENCH_FILE: &str = "bench.csv";
pub const BENCH_FRAMES_FILE: &str = "bench_frames.csv";

pub const FRAMES_HEADER: [&str; 12] = [
    "seed",
    "frame",
    "j",
    "f",
    "jf",
    "bank_size",
    "admitted",
    "deferred",
    "evicted_frame",
    "corrupted",
    "normalized_score",
    "wall_time_s",
];
pub const SUMMARY_HEADER: [&str; 8] = [
    "seed",
    "frames",
    "mean_j",
    "mean_f",
    "mean_jf",
    "admitted",
    "final_bank_size",
    "anchor_degenerate",
];
pub const SWEEP_HEADER: [&str; 7] = [
    "axis",
    "value",
    "seeds",
    "mean_j",
    "mean_f",
    "mean_jf",
    "final_occupancy",
];
pub const BENCH_HEADER: [&str; 9] = [
    "mode",
    "frames",
    "bucket_start",
    "bucket_end",
    "mean_bank_size",
    "max_bank_size",
    "p10_ms",
    "p50_ms",
    "p90_ms",
];
pub const BENCH_FRAMES_HEADER: [&str; 6] =
    ["mode", "frames", "seed", "frame", "bank_size", "wall_time_s"];

pub fn writer(path: &Path) -> Result<Writer<File>> {
    WriterBuilder::new()
        .terminator(Terminator::Any(b'\n'))
        .from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))
}

fn finish(mut w: Writer<File>, path: &Path) -> Result<()> {
    w.flush()
        .with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_frames(path: &Path, results: &[EvalResult]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(FRAMES_HEADER)?;
    for result in results {
        for r in &result.frames {
            w.write_record([
                result.seed.to_string(),
                r.frame.to_string(),
                r.j.to_string(),
                r.f.to_string(),
                r.jf.to_string(),
                r.bank_size.to_string(),
                r.admitted.to_string(),
                r.deferred.to_string(),
                r.evicted.map(|e| e.to_string()).unwrap_or_default(),
                r.corrupted.to_string(),
                r.normalized_score.to_string(),
                r.wall_time.to_string(),
            ])?;
        }
    }
    finish(w, path)
}

/// One row per seed, then a `mean` row.
pub fn write_summary(path: &Path, results: &[EvalResult]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(SUMMARY_HEADER)?;
    let row = |result: &EvalResult| {
        let admitted = result.frames.iter().filter(|r| r.admitted).count();
        let last = result.frames.last().map_or(0, |r| r.bank_size);
        (admitted, last)
    };
    for result in results {
        let (admitted, last) = row(result);
        w.write_record([
            result.seed.to_string(),
            result.frames.len().to_string(),
            result.mean_j.to_string(),
            result.mean_f.to_string(),
            result.mean_jf.to_string(),
            admitted.to_string(),
            last.to_string(),
            result.anchor_degenerate.to_string(),
        ])?;
    }
    let n = results.len() as f64;
    let mean = |f: &dyn Fn(&EvalResult) -> f64| results.iter().map(f).sum::<f64>() / n;
    let mean_j = mean(&|r| r.mean_j);
    let mean_f = mean(&|r| r.mean_f);
    w.write_record([
        "mean".to_string(),
        mean(&|r| r.frames.len() as f64).to_string(),
        mean_j.to_string(),
        mean_f.to_string(),
        ((mean_j + mean_f) / 2.0).to_string(),
        mean(&|r| row(r).0 as f64).to_string(),
        mean(&|r| row(r).1 as f64).to_string(),
        results.iter().any(|r| r.anchor_degenerate).to_string(),
    ])?;
    finish(w, path)
}

pub fn write_sweep(path: &Path, axis: &str, rows: &[SweepRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(SWEEP_HEADER)?;
    for row in rows {
        w.write_record([
            axis.to_string(),
            row.value.to_string(),
            row.seeds.to_string(),
            row.mean_j.to_string(),
            row.mean_f.to_string(),
            row.mean_jf.to_string(),
            row.final_occupancy.to_string(),
        ])?;
    }
    finish(w, path)
}

/// Per-bucket statistics of one benchmark run.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchBucket {
    pub mode: String,
    pub frames: usize,
    pub start: usize,
    pub end: usize,
    pub mean_bank_size: f64,
    pub max_bank_size: usize,
    pub p10_ms: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
}

pub fn write_bench(path: &Path, buckets: &[BenchBucket]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(BENCH_HEADER)?;
    for b in buckets {
        w.write_record([
            b.mode.clone(),
            b.frames.to_string(),
            b.start.to_string(),
            b.end.to_string(),
            b.mean_bank_size.to_string(),
            b.max_bank_size.to_string(),
            b.p10_ms.to_string(),
            b.p50_ms.to_string(),
            b.p90_ms.to_string(),
        ])?;
    }
    finish(w, path)
}

pub fn write_bench_frames(path: &Path, runs: &[(String, usize, EvalResult)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(BENCH_FRAMES_HEADER)?;
    for (mode, frames, result) in runs {
        for r in &result.frames {
            w.write_record([
                mode.clone(),
                frames.to_string(),
                result.seed.to_string(),
                r.frame.to_string(),
                r.bank_size.to_string(),
                r.wall_time.to_string(),
            ])?;
        }
    }
    finish(w, path)
}
