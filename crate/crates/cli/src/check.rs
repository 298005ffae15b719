//! Cross-checks the bitmap metrics against the brute-force set oracles on
//! random mask pairs.

use std::path::Path;

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vosmem::quality::mask_iou;
use vosmem::sim::metrics::{boundary_f, reference};
use vosmem::ObjectMask;

use crate::output::writer;

pub const CHECK_FILE: &str = "metric_check.csv";

/// Largest side of a generated mask.
pub const MAX_SIDE: usize = 32;

fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ObjectMask {
    match rng.gen_range(0..4) {
        0 => ObjectMask::empty(h, w),
        1 => {
            let p: f64 = rng.gen();
            ObjectMask::from_fn(h, w, |_, _| rng.gen_bool(p))
        }
        _ => {
            let rects: Vec<[usize; 4]> = (0..rng.gen_range(1..4))
                .map(|_| {
                    let (r0, c0) = (rng.gen_range(0..h), rng.gen_range(0..w));
                    [r0, c0, rng.gen_range(r0..h) + 1, rng.gen_range(c0..w) + 1]
                })
                .collect();
            ObjectMask::from_fn(h, w, |r, c| {
                rects
                    .iter()
                    .any(|b| (b[0]..b[2]).contains(&r) && (b[1]..b[3]).contains(&c))
            })
        }
    }
}

/// A random pair of masks of equal size (each side in `1..=32`) and a
/// boundary tolerance in `0..=3`. One pair in four compares a mask with a
/// shifted copy of itself.
pub fn random_pair(rng: &mut ChaCha8Rng) -> (ObjectMask, ObjectMask, usize) {
    let h = rng.gen_range(1..=MAX_SIDE);
    let w = rng.gen_range(1..=MAX_SIDE);
    let a = random_mask(rng, h, w);
    let b = if rng.gen_range(0..4) == 0 {
        let (dy, dx) = (rng.gen_range(-2i64..=2), rng.gen_range(-2i64..=2));
        ObjectMask::from_fn(h, w, |r, c| {
            let (y, x) = (r as i64 - dy, c as i64 - dx);
            y >= 0 && x >= 0 && y < h as i64 && x < w as i64 && a.is_foreground(y as usize * w + x as usize)
        })
    } else {
        random_mask(rng, h, w)
    };
    (a, b, rng.gen_range(0..=3))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub pairs: usize,
    pub j_mismatches: usize,
    pub max_f_error: f64,
}

impl CheckReport {
    pub fn passed(&self, f_tolerance: f64) -> bool {
        self.j_mismatches == 0 && self.max_f_error <= f_tolerance
    }
}

/// Compares both metrics on `pairs` random pairs; optionally writes one row
/// per pair.
pub fn check_metrics(pairs: usize, seed: u64, out: Option<&Path>) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut w = writer(&dir.join(CHECK_FILE))?;
            w.write_record(["pair", "height", "width", "tolerance", "j", "j_oracle", "f", "f_oracle"])?;
            Some(w)
        }
        None => None,
    };
    let mut report = CheckReport {
        pairs,
        j_mismatches: 0,
        max_f_error: 0.0,
    };
    for i in 0..pairs {
        let (a, b, tol) = random_pair(&mut rng);
        let j = mask_iou(&a, &b)?;
        let j_ref = reference::iou(&a, &b);
        let f = boundary_f(&a, &b, tol)?;
        let f_ref = reference::boundary_f(&a, &b, tol);
        if j != j_ref {
            report.j_mismatches += 1;
        }
        report.max_f_error = report.max_f_error.max((f - f_ref).abs());
        if let Some(w) = csv.as_mut() {
            w.write_record([
                i.to_string(),
                a.height().to_string(),
                a.width().to_string(),
                tol.to_string(),
                j.to_string(),
                j_ref.to_string(),
                f.to_string(),
                f_ref.to_string(),
            ])?;
        }
    }
    if let Some(mut w) = csv {
        w.flush()?;
    }
    Ok(report)
}
