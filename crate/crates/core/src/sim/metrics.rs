//! Region (J) and boundary (F) scores.

use crate::error::Result;
use crate::grid::{LabeledMaskSet, ObjectMask};
use crate::quality::mask_iou;

/// Boundary tolerance in pixels: `ceil(0.008 * diagonal)`.
pub fn default_tolerance(height: usize, width: usize) -> usize {
    let diag = ((height * height + width * width) as f64).sqrt();
    ((0.008 * diag).ceil() as usize).max(1)
}

/// Foreground pixels with at least one 4-neighbour inside the frame that is
/// background.
pub fn boundary_map(mask: &ObjectMask) -> Vec<bool> {
    let (h, w) = (mask.height(), mask.width());
    let fg = |r: usize, c: usize| mask.is_foreground(r * w + c);
    let mut out = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            if !fg(r, c) {
                continue;
            }
            let edge = (r > 0 && !fg(r - 1, c))
                || (r + 1 < h && !fg(r + 1, c))
                || (c > 0 && !fg(r, c - 1))
                || (c + 1 < w && !fg(r, c + 1));
            out[r * w + c] = edge;
        }
    }
    out
}

/// Marks every pixel within Euclidean distance `radius` of a set pixel.
fn dilate(map: &[bool], h: usize, w: usize, radius: usize) -> Vec<bool> {
    let rad = radius as isize;
    let offsets: Vec<(isize, isize)> = (-rad..=rad)
        .flat_map(|dy| (-rad..=rad).map(move |dx| (dy, dx)))
        .filter(|(dy, dx)| dy * dy + dx * dx <= rad * rad)
        .collect();
    let mut out = vec![false; h * w];
    for r in 0..h as isize {
        for c in 0..w as isize {
            if !map[r as usize * w + c as usize] {
                continue;
            }
            for &(dy, dx) in &offsets {
                let (y, x) = (r + dy, c + dx);
                if y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w {
                    out[y as usize * w + x as usize] = true;
                }
            }
        }
    }
    out
}

pub(crate) fn f_from_counts(
    pred_total: usize,
    pred_matched: usize,
    truth_total: usize,
    truth_matched: usize,
) -> f64 {
    match (pred_total, truth_total) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ => {
            let precision = pred_matched as f64 / pred_total as f64;
            let recall = truth_matched as f64 / truth_total as f64;
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        }
    }
}

/// Contour F-measure: boundary pixels count as matched when the other mask
/// has a boundary pixel within `tolerance_px`.
pub fn boundary_f(prediction: &ObjectMask, truth: &ObjectMask, tolerance_px: usize) -> Result<f64> {
    prediction.same_shape(truth)?;
    let (h, w) = (prediction.height(), prediction.width());
    let pb = boundary_map(prediction);
    let tb = boundary_map(truth);
    let pd = dilate(&pb, h, w, tolerance_px);
    let td = dilate(&tb, h, w, tolerance_px);
    let count = |m: &[bool]| m.iter().filter(|&&b| b).count();
    let both = |a: &[bool], b: &[bool]| a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    Ok(f_from_counts(count(&pb), both(&pb, &td), count(&tb), both(&tb, &pd)))
}

/// Mean J and mean F over the objects of a frame.
pub fn frame_scores(
    prediction: &LabeledMaskSet,
    truth: &LabeledMaskSet,
    tolerance_px: usize,
) -> Result<(f64, f64)> {
    prediction.check_aligned(truth)?;
    let n = prediction.object_count() as f64;
    let mut j = 0.0;
    let mut f = 0.0;
    for (p, t) in prediction.masks().iter().zip(truth.masks()) {
        j += mask_iou(p, t)?;
        f += boundary_f(p, t, tolerance_px)?;
    }
    Ok((j / n, f / n))
}

/// Brute-force set-based versions of the metrics, used to cross-check the
/// bitmap implementations.
pub mod reference {
    use std::collections::HashSet;

    use super::f_from_counts;
    use crate::grid::ObjectMask;

    type Pixel = (i64, i64);

    fn foreground(mask: &ObjectMask) -> HashSet<Pixel> {
        let w = mask.width();
        (0..mask.values().len())
            .filter(|&i| mask.values()[i] >= 0.5)
            .map(|i| ((i / w) as i64, (i % w) as i64))
            .collect()
    }

    pub fn iou(prediction: &ObjectMask, truth: &ObjectMask) -> f64 {
        let p = foreground(prediction);
        let t = foreground(truth);
        let union = p.union(&t).count();
        if union == 0 {
            return 1.0;
        }
        p.intersection(&t).count() as f64 / union as f64
    }

    fn boundary(mask: &ObjectMask) -> HashSet<Pixel> {
        let fg = foreground(mask);
        let (h, w) = (mask.height() as i64, mask.width() as i64);
        fg.iter()
            .copied()
            .filter(|&(r, c)| {
                [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)]
                    .iter()
                    .any(|&(y, x)| y >= 0 && x >= 0 && y < h && x < w && !fg.contains(&(y, x)))
            })
            .collect()
    }

    fn matched(from: &HashSet<Pixel>, to: &HashSet<Pixel>, tol: i64) -> usize {
        from.iter()
            .filter(|&&(r, c)| {
                to.iter()
                    .any(|&(y, x)| (r - y) * (r - y) + (c - x) * (c - x) <= tol * tol)
            })
            .count()
    }

    pub fn boundary_f(prediction: &ObjectMask, truth: &ObjectMask, tolerance_px: usize) -> f64 {
        let pb = boundary(prediction);
        let tb = boundary(truth);
        let tol = tolerance_px as i64;
        f_from_counts(
            pb.len(),
            matched(&pb, &tb, tol),
            tb.len(),
            matched(&tb, &pb, tol),
        )
    }
}
