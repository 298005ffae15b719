//! Segmentation-quality scores: the IoU target, a seeded noisy oracle that
//! stands in for a learned scorer, per-frame aggregation and first-frame
//! normalization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{LabeledMaskSet, ObjectMask};

/// Smallest anchor a video may be normalized by.
pub const MIN_ANCHOR: f64 = 1e-6;

/// Intersection over union of two masks, binarized at 0.5.
///
/// Two empty masks score 1.0 (a correctly predicted absent object).
pub fn mask_iou(prediction: &ObjectMask, truth: &ObjectMask) -> Result<f64> {
    prediction.same_shape(truth)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for i in 0..prediction.values().len() {
        let (p, t) = (prediction.is_foreground(i), truth.is_foreground(i));
        inter += (p && t) as usize;
        union += (p || t) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Per-object IoU of two aligned mask sets.
pub fn per_object_iou(prediction: &LabeledMaskSet, truth: &LabeledMaskSet) -> Result<Vec<f64>> {
    prediction.check_aligned(truth)?;
    prediction
        .masks()
        .iter()
        .zip(truth.masks())
        .map(|(p, t)| mask_iou(p, t))
        .collect()
}

/// Noisy IoU oracle: `clamp(iou_i + N(0, noise_sigma), 0, 1)` per object.
///
/// The noise stream is a `ChaCha8Rng` seeded with `seed`, one standard normal
/// draw per object in object order, scaled by `noise_sigma`. With
/// `noise_sigma == 0` no draws are made and the IoU is returned unchanged.
pub fn oracle_score(
    prediction: &LabeledMaskSet,
    truth: &LabeledMaskSet,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::Config(format!(
            "noise sigma must be finite and non-negative, got {noise_sigma}"
        )));
    }
    let ious = per_object_iou(prediction, truth)?;
    if noise_sigma == 0.0 {
        return Ok(ious);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(ious
        .into_iter()
        .map(|iou| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (iou + noise_sigma * z).clamp(0.0, 1.0)
        })
        .collect())
}

/// Evaluates the quality of a predicted mask set.
pub trait QualityScorer {
    /// Per-object scores in `[0, 1]`. `image` is the frame's RGB buffer;
    /// `truth` is available to oracle scorers only.
    fn score(
        &self,
        image: &[f64],
        prediction: &LabeledMaskSet,
        truth: Option<&LabeledMaskSet>,
        seed: u64,
    ) -> Result<Vec<f64>>;
}

/// The IoU oracle with optional Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleScorer {
    pub noise_sigma: f64,
}

impl QualityScorer for OracleScorer {
    fn score(
        &self,
        _image: &[f64],
        prediction: &LabeledMaskSet,
        truth: Option<&LabeledMaskSet>,
        seed: u64,
    ) -> Result<Vec<f64>> {
        let truth =
            truth.ok_or_else(|| Error::Config("oracle scorer requires ground truth".into()))?;
        oracle_score(prediction, truth, self.noise_sigma, seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub frame_index: usize,
    pub per_object_scores: Vec<f64>,
    pub frame_score: f64,
    pub normalized_score: f64,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Averages per-object scores and divides by the first frame's score.
pub fn aggregate_and_normalize(
    per_object_scores: &[f64],
    first_frame_score: f64,
    frame_index: usize,
) -> Result<QualityReport> {
    if !(first_frame_score > 0.0) {
        return Err(Error::DegenerateAnchor(first_frame_score));
    }
    if per_object_scores.is_empty() {
        return Err(Error::Alignment { left: 0, right: 1 });
    }
    if let Some(bad) = per_object_scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::Config(format!("quality score {bad} outside [0, 1]")));
    }
    let frame_score = mean(per_object_scores);
    let normalized_score = if frame_index == 0 {
        1.0
    } else {
        frame_score / first_frame_score
    };
    Ok(QualityReport {
        frame_index,
        per_object_scores: per_object_scores.to_vec(),
        frame_score,
        normalized_score,
    })
}

/// The first frame's raw score as used for normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityAnchor {
    pub raw: f64,
    pub value: f64,
    /// Set when the raw score was below [`MIN_ANCHOR`] and clamped.
    pub degenerate: bool,
}

impl QualityAnchor {
    pub fn from_raw(raw: f64) -> Self {
        if raw < MIN_ANCHOR || !raw.is_finite() {
            Self {
                raw,
                value: MIN_ANCHOR,
                degenerate: true,
            }
        } else {
            Self {
                raw,
                value: raw,
                degenerate: false,
            }
        }
    }
}

/// Mean squared error between predicted scores and per-object mask IoU.
pub fn scorer_mse(
    predicted_scores: &[f64],
    predictions: &LabeledMaskSet,
    truths: &LabeledMaskSet,
) -> Result<f64> {
    let ious = per_object_iou(predictions, truths)?;
    if predicted_scores.len() != ious.len() {
        return Err(Error::Alignment {
            left: predicted_scores.len(),
            right: ious.len(),
        });
    }
    Ok(predicted_scores
        .iter()
        .zip(&ious)
        .map(|(s, iou)| (s - iou).powi(2))
        .sum::<f64>()
        / ious.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(h: usize, w: usize, r0: usize, c0: usize, size: usize) -> ObjectMask {
        ObjectMask::from_fn(h, w, |r, c| {
            (r0..r0 + size).contains(&r) && (c0..c0 + size).contains(&c)
        })
    }

    fn set(masks: Vec<ObjectMask>) -> LabeledMaskSet {
        LabeledMaskSet::new(masks).unwrap()
    }

    #[test]
    fn iou_identical_and_disjoint() {
        let a = block(4, 4, 0, 0, 2);
        let b = block(4, 4, 2, 2, 2);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(mask_iou(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn iou_overlapping_blocks() {
        // {(0,0),(0,1),(1,0),(1,1)} vs {(1,1),(1,2),(2,1),(2,2)}: 1 shared of 7
        let a = block(4, 4, 0, 0, 2);
        let b = block(4, 4, 1, 1, 2);
        assert!((mask_iou(&a, &b).unwrap() - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn iou_empty_cases() {
        let e = ObjectMask::empty(3, 3);
        assert_eq!(mask_iou(&e, &e).unwrap(), 1.0);
        assert_eq!(mask_iou(&e, &block(3, 3, 0, 0, 1)).unwrap(), 0.0);
        assert!(mask_iou(&e, &ObjectMask::empty(3, 4)).is_err());
    }

    #[test]
    fn noiseless_oracle() {
        let a = block(6, 6, 0, 0, 2);
        let b = block(6, 6, 3, 3, 2);
        let perfect = oracle_score(&set(vec![a.clone()]), &set(vec![a.clone()]), 0.0, 9).unwrap();
        assert_eq!(perfect, vec![1.0]);
        let off = oracle_score(&set(vec![a]), &set(vec![b]), 0.0, 9).unwrap();
        assert_eq!(off, vec![0.0]);
    }

    #[test]
    fn noisy_oracle_follows_recipe() {
        let a = block(8, 8, 0, 0, 4);
        let b = block(8, 8, 1, 1, 4);
        let c = block(8, 8, 4, 4, 3);
        let pred = set(vec![a.clone(), c.clone()]);
        let truth = set(vec![b.clone(), c.clone()]);
        let got = oracle_score(&pred, &truth, 0.1, 42).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let iou0 = 9.0 / 23.0;
        let z0: f64 = StandardNormal.sample(&mut rng);
        let z1: f64 = StandardNormal.sample(&mut rng);
        let want = [
            (iou0 + 0.1 * z0).clamp(0.0, 1.0),
            (1.0 + 0.1 * z1).clamp(0.0, 1.0),
        ];
        assert_eq!(got, want);
    }

    #[test]
    fn oracle_rejects_misaligned_sets() {
        let a = block(4, 4, 0, 0, 2);
        let err = oracle_score(&set(vec![a.clone()]), &set(vec![a.clone(), a]), 0.0, 0);
        assert_eq!(err, Err(Error::Alignment { left: 1, right: 2 }));
    }

    #[test]
    fn aggregate_examples() {
        let r = aggregate_and_normalize(&[0.93], 0.93, 0).unwrap();
        assert_eq!(r.normalized_score, 1.0);

        let r = aggregate_and_normalize(&[0.8, 0.9], 0.85, 3).unwrap();
        assert!((r.frame_score - 0.85).abs() < 1e-12);
        assert!((r.normalized_score - 1.0).abs() < 1e-12);

        let r = aggregate_and_normalize(&[0.72], 0.9, 7).unwrap();
        assert!((r.normalized_score - 0.8).abs() < 1e-12);

        // frame 0 stays anchored even against a different first-frame score
        let r = aggregate_and_normalize(&[0.4], 0.9, 0).unwrap();
        assert_eq!(r.normalized_score, 1.0);
    }

    #[test]
    fn aggregate_rejects_bad_anchor() {
        assert_eq!(
            aggregate_and_normalize(&[0.5], 0.0, 1),
            Err(Error::DegenerateAnchor(0.0))
        );
        assert!(aggregate_and_normalize(&[0.5], -1.0, 1).is_err());
    }

    #[test]
    fn anchor_fallback_is_flagged() {
        let a = QualityAnchor::from_raw(1e-9);
        assert!(a.degenerate);
        assert_eq!(a.value, MIN_ANCHOR);
        let a = QualityAnchor::from_raw(0.97);
        assert!(!a.degenerate);
        assert_eq!(a.value, 0.97);
    }

    #[test]
    fn mse_examples() {
        let a = block(4, 4, 0, 0, 2);
        let b = block(4, 4, 2, 2, 2);
        let ab = set(vec![a.clone()]);
        assert_eq!(scorer_mse(&[1.0], &ab, &ab).unwrap(), 0.0);
        assert_eq!(scorer_mse(&[0.5], &ab, &ab).unwrap(), 0.25);

        // IoUs 0.5 and 1.0
        let half = ObjectMask::from_fn(4, 4, |r, _| r < 1);
        let full = ObjectMask::from_fn(4, 4, |r, _| r < 2);
        let pred = set(vec![half, b.clone()]);
        let truth = set(vec![full, b]);
        let mse = scorer_mse(&[0.6, 0.9], &pred, &truth).unwrap();
        assert!((mse - 0.01).abs() < 1e-15);
        assert!(scorer_mse(&[0.6], &pred, &truth).is_err());
    }
}
