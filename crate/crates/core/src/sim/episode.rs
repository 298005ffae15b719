//! One-shot segmentation of a synthetic video with the memory engine.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{FeatureGrid, LabeledMaskSet};
use crate::membank::{Admission, MemoryBank};
use crate::quality::{aggregate_and_normalize, OracleScorer, QualityAnchor, QualityScorer};
use crate::readout::{memory_read_combined, prior_enhance, PriorGate};
use crate::sim::config::{CorruptionConfig, RunConfig};
use crate::sim::decode::decode_grid;
use crate::sim::descriptor::{extract_descriptor, KEY_CHANNELS};
use crate::sim::metrics::{default_tolerance, frame_scores};
use crate::sim::video::{mix_seed, VideoSpec};

const NOISE_STREAM: u64 = 0x0A11_CE5E;
const CORRUPTION_STREAM: u64 = 0x0C04_40B7;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame: usize,
    pub j: f64,
    pub f: f64,
    pub jf: f64,
    /// Entries in the bank after this frame was processed.
    pub bank_size: usize,
    pub admitted: bool,
    pub deferred: bool,
    pub evicted: Option<usize>,
    pub corrupted: bool,
    pub normalized_score: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub seed: u64,
    /// One record per frame, frame 0 included.
    pub frames: Vec<FrameRecord>,
    /// Means over frames `1..`; the annotated frame is excluded.
    pub mean_j: f64,
    pub mean_f: f64,
    pub mean_jf: f64,
    /// The first frame's raw score fell below the normalization floor.
    pub anchor_degenerate: bool,
    pub final_bank: String,
}

impl EvalResult {
    pub fn occupancy(&self) -> Vec<usize> {
        self.frames.iter().map(|r| r.bank_size).collect()
    }

    pub fn wall_times(&self) -> Vec<f64> {
        self.frames.iter().map(|r| r.wall_time).collect()
    }
}

fn is_corrupted(cfg: &CorruptionConfig, seed: u64, t: usize) -> (bool, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed ^ CORRUPTION_STREAM, t as u64));
    let draw: f64 = rng.gen();
    (t > 0 && (cfg.frames.contains(&t) || draw < cfg.rate), rng)
}

/// Translates every object by `(±shift, ±shift)` and dilates it by `dilate`
/// pixels; later objects win overlaps.
pub fn corrupt_masks(
    masks: &LabeledMaskSet,
    shift: usize,
    dilate: usize,
    rng: &mut ChaCha8Rng,
) -> LabeledMaskSet {
    let (h, w) = (masks.height() as isize, masks.width() as isize);
    let sy = if rng.gen::<bool>() { 1 } else { -1 } * shift as isize;
    let sx = if rng.gen::<bool>() { 1 } else { -1 } * shift as isize;
    let labels = masks.label_map();
    let mut moved = vec![0u8; labels.len()];
    for r in 0..h {
        for c in 0..w {
            let l = labels[(r * w + c) as usize];
            let (y, x) = (r + sy, c + sx);
            if l != 0 && y >= 0 && x >= 0 && y < h && x < w {
                moved[(y * w + x) as usize] = l;
            }
        }
    }
    let rad = dilate as isize;
    let mut out = moved.clone();
    if rad > 0 {
        for r in 0..h {
            for c in 0..w {
                let l = moved[(r * w + c) as usize];
                if l == 0 {
                    continue;
                }
                for dy in -rad..=rad {
                    for dx in -rad..=rad {
                        let (y, x) = (r + dy, c + dx);
                        if dy * dy + dx * dx <= rad * rad && y >= 0 && x >= 0 && y < h && x < w {
                            let o = &mut out[(y * w + x) as usize];
                            *o = (*o).max(l);
                        }
                    }
                }
            }
        }
    }
    LabeledMaskSet::from_label_map(masks.height(), masks.width(), &out, masks.object_count())
        .expect("same resolution")
}

/// Runs the full per-frame loop on a video:
/// query descriptor, prior enhancement with the previous mask, memory read,
/// label decoding, quality scoring and admission.
pub fn run_episode(video: &VideoSpec, config: &RunConfig, seed: u64) -> Result<EvalResult> {
    run_episode_observed(video, config, seed, |_, _, _| {})
}

/// [`run_episode`] that also hands every frame's final prediction and
/// ground truth to `observe`, frame 0 included.
pub fn run_episode_observed(
    video: &VideoSpec,
    config: &RunConfig,
    seed: u64,
    mut observe: impl FnMut(usize, &LabeledMaskSet, &LabeledMaskSet),
) -> Result<EvalResult> {
    video.validate()?;
    config.policy.validate()?;
    let n = video.object_count();
    let (h, w) = (video.height, video.width);
    let stride = config.descriptor.stride;
    let tolerance = config
        .boundary_tolerance
        .unwrap_or_else(|| default_tolerance(h, w));
    let scorer = OracleScorer {
        noise_sigma: config.scorer.noise,
    };
    let mut gate = PriorGate::seeded(config.prior.mode, KEY_CHANNELS, config.prior.seed);
    gate.strength = config.prior.strength;
    let mut bank = MemoryBank::new(config.policy)?;
    let noise_seed = |t: usize| mix_seed(seed ^ NOISE_STREAM, t as u64);

    let mut records = Vec::with_capacity(video.frame_count);

    // annotated first frame
    let start = Instant::now();
    let frame0 = video.render(0);
    let truth0 = frame0.truth(n);
    let raw0 = scorer.score(&frame0.image, &truth0, Some(&truth0), noise_seed(0))?;
    let raw0_mean = raw0.iter().sum::<f64>() / raw0.len() as f64;
    let anchor = QualityAnchor::from_raw(raw0_mean);
    let report0 = aggregate_and_normalize(&raw0, anchor.value, 0)?;
    let d0 = extract_descriptor(&frame0.image, h, w, Some(&truth0), &config.descriptor)?;
    bank.consider_admission(&report0, d0.key, d0.value, 0)?;
    observe(0, &truth0, &truth0);
    records.push(FrameRecord {
        frame: 0,
        j: 1.0,
        f: 1.0,
        jf: 1.0,
        bank_size: bank.len(),
        admitted: true,
        deferred: false,
        evicted: None,
        corrupted: false,
        normalized_score: report0.normalized_score,
        wall_time: start.elapsed().as_secs_f64(),
    });

    let mut previous = truth0.union();
    let mut snapshot: Option<(FeatureGrid, FeatureGrid)> = None;
    for t in 1..video.frame_count {
        let mut step = || -> Result<FrameRecord> {
            let start = Instant::now();
            let frame = video.render(t);
            let truth = frame.truth(n);
            let query = extract_descriptor(&frame.image, h, w, None, &config.descriptor)?;
            let key = prior_enhance(&query.key, &previous, &gate)?;
            if snapshot.is_none() {
                snapshot = Some(bank.snapshot_keys_values()?);
            }
            let (mk, mv) = snapshot.as_ref().expect("snapshot present");
            let combined = memory_read_combined(&key, &query.value, mk, mv, config.read)?;
            let mut decoded = decode_grid(&combined, n, stride, &config.decode, Some(&frame.image))?;

            let (corrupted, mut rng) = is_corrupted(&config.scorer.corruption, seed, t);
            if corrupted {
                let c = &config.scorer.corruption;
                decoded = corrupt_masks(&decoded, c.shift, c.dilate, &mut rng);
            }
            let scores = scorer.score(&frame.image, &decoded, Some(&truth), noise_seed(t))?;
            let report = aggregate_and_normalize(&scores, anchor.value, t)?;
            let memory = extract_descriptor(&frame.image, h, w, Some(&decoded), &config.descriptor)?;
            let outcome = bank.consider_admission(&report, memory.key, memory.value, t)?;
            if outcome.admitted() {
                snapshot = None;
            }
            let (j, f) = frame_scores(&decoded, &truth, tolerance)?;
            observe(t, &decoded, &truth);
            previous = decoded.union();
            Ok(FrameRecord {
                frame: t,
                j,
                f,
                jf: (j + f) / 2.0,
                bank_size: bank.len(),
                admitted: outcome.admitted(),
                deferred: outcome == Admission::Deferred,
                evicted: outcome.evicted_frame(),
                corrupted,
                normalized_score: report.normalized_score,
                wall_time: start.elapsed().as_secs_f64(),
            })
        };
        let record = step().map_err(|e| Error::Frame {
            frame: t,
            source: Box::new(e),
        })?;
        records.push(record);
    }

    let evaluated = &records[1..];
    let count = evaluated.len() as f64;
    let mean_j = evaluated.iter().map(|r| r.j).sum::<f64>() / count;
    let mean_f = evaluated.iter().map(|r| r.f).sum::<f64>() / count;
    Ok(EvalResult {
        seed,
        frames: records,
        mean_j,
        mean_f,
        mean_jf: (mean_j + mean_f) / 2.0,
        anchor_degenerate: anchor.degenerate,
        final_bank: bank.state_text(),
    })
}

/// Builds the configured video for `seed` and runs it.
pub fn run_seed(config: &RunConfig, seed: u64) -> Result<EvalResult> {
    let video = config.video.build(seed)?;
    run_episode(&video, config, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ObjectMask;

    #[test]
    fn corruption_translates_and_dilates() {
        let set = LabeledMaskSet::new(vec![ObjectMask::from_fn(8, 8, |r, c| r == 3 && c == 3)])
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = corrupt_masks(&set, 2, 0, &mut rng);
        assert_eq!(out.masks()[0].foreground_count(), 1);
        assert!(!out.masks()[0].is_foreground(3 * 8 + 3));
        let out = corrupt_masks(&set, 0, 1, &mut rng);
        assert_eq!(out.masks()[0].foreground_count(), 5);
    }
}
