//! Space-time memory read and previous-mask prior enhancement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dot, normalize_row, FeatureGrid, Matrix, NormMode, ObjectMask};

/// Options for turning key similarities into read weights.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadConfig {
    pub mode: NormMode,
    /// Divide similarities by `sqrt(channels)`.
    pub scale_by_channels: bool,
    /// L2-normalize every key vector before the dot product.
    pub l2_normalize_keys: bool,
}

/// Query value concatenated with the retrieved memory value, plus the read
/// weights (query locations x memory locations).
#[derive(Debug, Clone, PartialEq)]
pub struct ReadOutput {
    pub combined: FeatureGrid,
    pub weights: Matrix,
}

fn l2_normalized(v: &[f64]) -> Vec<f64> {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter().map(|x| x / norm).collect()
    } else {
        v.to_vec()
    }
}

fn normalized_keys(grid: &FeatureGrid) -> Result<FeatureGrid> {
    let mut data = Vec::with_capacity(grid.data().len());
    for i in 0..grid.locations() {
        data.extend(l2_normalized(grid.location(i)));
    }
    FeatureGrid::new(grid.height(), grid.width(), grid.channels(), data)
}

fn check_read_shapes(
    query_key: &FeatureGrid,
    query_value: &FeatureGrid,
    memory_key: &FeatureGrid,
    memory_value: &FeatureGrid,
) -> Result<()> {
    if query_key.channels() != memory_key.channels() {
        return Err(Error::Dimension(format!(
            "query key has {} channels, memory key has {}",
            query_key.channels(),
            memory_key.channels()
        )));
    }
    if query_key.locations() != query_value.locations() {
        return Err(Error::Dimension(format!(
            "query key has {} locations, query value has {}",
            query_key.locations(),
            query_value.locations()
        )));
    }
    if memory_key.locations() != memory_value.locations() {
        return Err(Error::Dimension(format!(
            "memory key has {} locations, memory value has {}",
            memory_key.locations(),
            memory_value.locations()
        )));
    }
    Ok(())
}

struct Reader<'a> {
    memory_key: &'a FeatureGrid,
    memory_value: &'a FeatureGrid,
    config: ReadConfig,
    scale: f64,
}

impl Reader<'_> {
    /// Fills `weights` for one query key and accumulates the retrieved value
    /// into `out`.
    fn read_row(&self, query: &[f64], weights: &mut Vec<f64>, out: &mut [f64]) {
        let query = if self.config.l2_normalize_keys {
            std::borrow::Cow::Owned(l2_normalized(query))
        } else {
            std::borrow::Cow::Borrowed(query)
        };
        let m = self.memory_key.locations();
        weights.clear();
        weights.extend((0..m).map(|j| self.scale * dot(&query, self.memory_key.location(j))));
        if self.config.mode == NormMode::RawSum {
            let raw = weights.clone();
            if normalize_row(weights, NormMode::RawSum).is_err() {
                weights.copy_from_slice(&raw);
                normalize_row(weights, NormMode::Softmax).expect("softmax is total");
            }
        } else {
            normalize_row(weights, NormMode::Softmax).expect("softmax is total");
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.memory_value.location(j)) {
                *o += w * v;
            }
        }
    }
}

fn read_impl(
    query_key: &FeatureGrid,
    query_value: &FeatureGrid,
    memory_key: &FeatureGrid,
    memory_value: &FeatureGrid,
    config: ReadConfig,
    keep_weights: bool,
) -> Result<(FeatureGrid, Vec<f64>)> {
    check_read_shapes(query_key, query_value, memory_key, memory_value)?;
    let normalized;
    let memory_key = if config.l2_normalize_keys {
        normalized = normalized_keys(memory_key)?;
        &normalized
    } else {
        memory_key
    };
    let reader = Reader {
        memory_key,
        memory_value,
        config,
        scale: if config.scale_by_channels {
            1.0 / (query_key.channels() as f64).sqrt()
        } else {
            1.0
        },
    };
    let qc = query_value.channels();
    let mc = memory_value.channels();
    let n = query_key.locations();
    let mut combined = Vec::with_capacity(n * (qc + mc));
    let mut all_weights = Vec::new();
    let mut weights = Vec::with_capacity(memory_key.locations());
    let mut retrieved = vec![0.0; mc];
    for i in 0..n {
        reader.read_row(query_key.location(i), &mut weights, &mut retrieved);
        combined.extend_from_slice(query_value.location(i));
        combined.extend_from_slice(&retrieved);
        if keep_weights {
            all_weights.extend_from_slice(&weights);
        }
    }
    let combined = FeatureGrid::new(query_value.height(), query_value.width(), qc + mc, combined)?;
    Ok((combined, all_weights))
}

/// Reads the memory for every query location: the retrieved value is the
/// weighted sum of memory values, concatenated after the query value.
///
/// In raw-sum mode a row whose similarity sum is not positive falls back to
/// softmax.
pub fn memory_read(
    query_key: &FeatureGrid,
    query_value: &FeatureGrid,
    memory_key: &FeatureGrid,
    memory_value: &FeatureGrid,
    config: ReadConfig,
) -> Result<ReadOutput> {
    let (combined, weights) = read_impl(
        query_key,
        query_value,
        memory_key,
        memory_value,
        config,
        true,
    )?;
    let weights = Matrix::new(query_key.locations(), memory_key.locations(), weights)?;
    Ok(ReadOutput { combined, weights })
}

/// Same as [`memory_read`] without materializing the weight matrix.
pub fn memory_read_combined(
    query_key: &FeatureGrid,
    query_value: &FeatureGrid,
    memory_key: &FeatureGrid,
    memory_value: &FeatureGrid,
    config: ReadConfig,
) -> Result<FeatureGrid> {
    read_impl(
        query_key,
        query_value,
        memory_key,
        memory_value,
        config,
        false,
    )
    .map(|(combined, _)| combined)
}

/// Block-mean (area) downsampling; targets must divide the source size.
pub fn downsample_mask(
    mask: &ObjectMask,
    target_height: usize,
    target_width: usize,
) -> Result<ObjectMask> {
    let (h, w) = (mask.height(), mask.width());
    if target_height == 0
        || target_width == 0
        || h % target_height != 0
        || w % target_width != 0
    {
        return Err(Error::Resolution {
            from_h: h,
            from_w: w,
            to_h: target_height,
            to_w: target_width,
        });
    }
    let (bh, bw) = (h / target_height, w / target_width);
    if bh == 1 && bw == 1 {
        return Ok(mask.clone());
    }
    let area = (bh * bw) as f64;
    let mut values = Vec::with_capacity(target_height * target_width);
    for r in 0..target_height {
        for c in 0..target_width {
            let mut sum = 0.0;
            for dr in 0..bh {
                for dc in 0..bw {
                    sum += mask.get(r * bh + dr, c * bw + dc);
                }
            }
            values.push((sum / area).clamp(0.0, 1.0));
        }
    }
    ObjectMask::new(target_height, target_width, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    Off,
    #[default]
    Weak,
    Strong,
}

impl PriorMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PriorMode::Off => "off",
            PriorMode::Weak => "weak",
            PriorMode::Strong => "strong",
        }
    }
}

pub const DEFAULT_STRONG_STRENGTH: f64 = 5.0;

/// Fixed affine gate over (feature channels, downsampled previous mask),
/// squashed by a sigmoid and broadcast over the feature channels.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorGate {
    pub mode: PriorMode,
    pub feature_weights: Vec<f64>,
    pub mask_weight: f64,
    pub bias: f64,
    /// Strength of the mask-driven feature shift in strong mode.
    pub strength: f64,
    pub seed: u64,
}

impl PriorGate {
    /// Draws the gate parameters from `seed`.
    ///
    /// Feature weights are uniform in `±0.1 / sqrt(channels)`, the mask
    /// weight uniform in `[3.5, 4.5]` and the bias uniform in `[-1.5, -0.5]`,
    /// so a location inside the previous mask is passed almost unchanged
    /// while one far from it is damped.
    pub fn seeded(mode: PriorMode, channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 0.1 / (channels.max(1) as f64).sqrt();
        let feature_weights = (0..channels).map(|_| rng.gen_range(-bound..=bound)).collect();
        let mask_weight = rng.gen_range(3.5..=4.5);
        let bias = rng.gen_range(-1.5..=-0.5);
        Self {
            mode,
            feature_weights,
            mask_weight,
            bias,
            strength: DEFAULT_STRONG_STRENGTH,
            seed,
        }
    }

    fn gate(&self, feature: &[f64], mask_value: f64) -> f64 {
        let z = dot(&self.feature_weights, feature) + self.mask_weight * mask_value + self.bias;
        1.0 / (1.0 + (-z).exp())
    }

    /// Gate value for every location of `feature` (after any strong-mode shift).
    pub fn gate_map(&self, feature: &FeatureGrid, previous_mask: &ObjectMask) -> Result<Vec<f64>> {
        let (shifted, mask) = self.shifted(feature, previous_mask)?;
        Ok((0..shifted.locations())
            .map(|i| self.gate(shifted.location(i), mask.values()[i]))
            .collect())
    }

    fn shifted(
        &self,
        feature: &FeatureGrid,
        previous_mask: &ObjectMask,
    ) -> Result<(FeatureGrid, ObjectMask)> {
        if self.feature_weights.len() != feature.channels() {
            return Err(Error::Dimension(format!(
                "gate expects {} channels, feature has {}",
                self.feature_weights.len(),
                feature.channels()
            )));
        }
        let mask = downsample_mask(previous_mask, feature.height(), feature.width())?;
        if self.mode != PriorMode::Strong {
            return Ok((feature.clone(), mask));
        }
        let c = feature.channels();
        let mut mean = vec![0.0; c];
        let mut total = 0.0;
        for i in 0..feature.locations() {
            let m = mask.values()[i];
            total += m;
            for (acc, v) in mean.iter_mut().zip(feature.location(i)) {
                *acc += m * v;
            }
        }
        if total > 0.0 {
            mean.iter_mut().for_each(|v| *v /= total);
        }
        let mut data = feature.data().to_vec();
        for (i, chunk) in data.chunks_mut(c).enumerate() {
            let m = mask.values()[i];
            for (v, dir) in chunk.iter_mut().zip(&mean) {
                *v += self.strength * m * dir;
            }
        }
        Ok((
            FeatureGrid::new(feature.height(), feature.width(), c, data)?,
            mask,
        ))
    }
}

/// Modulates `query_feature` by a gate computed from it and the previous
/// frame's mask. Off mode returns the input unchanged.
pub fn prior_enhance(
    query_feature: &FeatureGrid,
    previous_mask: &ObjectMask,
    gate: &PriorGate,
) -> Result<FeatureGrid> {
    if gate.mode == PriorMode::Off {
        return Ok(query_feature.clone());
    }
    let (shifted, mask) = gate.shifted(query_feature, previous_mask)?;
    let c = shifted.channels();
    let mut data = shifted.data().to_vec();
    for (i, chunk) in data.chunks_mut(c).enumerate() {
        let g = gate.gate(shifted.location(i), mask.values()[i]);
        chunk.iter_mut().for_each(|v| *v *= g);
    }
    FeatureGrid::new(shifted.height(), shifted.width(), c, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(h: usize, w: usize, c: usize, data: &[f64]) -> FeatureGrid {
        FeatureGrid::new(h, w, c, data.to_vec()).unwrap()
    }

    #[test]
    fn single_memory_location_is_copied() {
        let qk = grid(2, 1, 2, &[1.0, 2.0, -3.0, 0.5]);
        let qv = grid(2, 1, 1, &[7.0, 8.0]);
        let mk = grid(1, 1, 2, &[0.3, -0.2]);
        let mv = grid(1, 1, 2, &[4.0, -1.5]);
        for mode in [NormMode::Softmax, NormMode::RawSum] {
            let out = memory_read(&qk, &qv, &mk, &mv, ReadConfig { mode, ..Default::default() })
                .unwrap();
            assert_eq!(out.combined.data(), &[7.0, 4.0, -1.5, 8.0, 4.0, -1.5]);
        }
    }

    #[test]
    fn identical_keys_average_values() {
        let qk = grid(1, 1, 2, &[0.4, 1.0]);
        let qv = grid(1, 1, 1, &[0.0]);
        let mk = grid(1, 2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let mv = grid(1, 2, 1, &[2.0, 6.0]);
        let out = memory_read(&qk, &qv, &mk, &mv, ReadConfig::default()).unwrap();
        assert_eq!(out.combined.data(), &[0.0, 4.0]);
        assert_eq!(out.weights.data(), &[0.5, 0.5]);
    }

    #[test]
    fn combined_matches_full_read() {
        let qk = grid(2, 2, 2, &[1.0, 0.0, 0.5, 0.5, -1.0, 2.0, 0.0, 1.0]);
        let qv = grid(2, 2, 1, &[1.0, 2.0, 3.0, 4.0]);
        let mk = grid(3, 1, 2, &[1.0, 1.0, 0.0, 2.0, -1.0, 0.5]);
        let mv = grid(3, 1, 2, &[1.0, 0.0, 0.0, 1.0, 0.5, 0.5]);
        let full = memory_read(&qk, &qv, &mk, &mv, ReadConfig::default()).unwrap();
        let fast = memory_read_combined(&qk, &qv, &mk, &mv, ReadConfig::default()).unwrap();
        assert_eq!(full.combined, fast);
    }

    #[test]
    fn raw_sum_degenerate_row_falls_back_to_softmax() {
        let qk = grid(1, 1, 1, &[1.0]);
        let qv = grid(1, 1, 1, &[0.0]);
        let mk = grid(1, 2, 1, &[1.0, -1.0]);
        let mv = grid(1, 2, 1, &[1.0, 0.0]);
        let cfg = ReadConfig {
            mode: NormMode::RawSum,
            ..Default::default()
        };
        let out = memory_read(&qk, &qv, &mk, &mv, cfg).unwrap();
        let e = 1.0f64.exp();
        let want = e / (e + (-1.0f64).exp());
        assert!((out.weights.get(0, 0) - want).abs() < 1e-15);
    }

    #[test]
    fn read_shape_errors() {
        let qk = grid(1, 1, 2, &[1.0, 0.0]);
        let qv = grid(1, 1, 1, &[0.0]);
        let mk = grid(1, 1, 3, &[1.0, 0.0, 0.0]);
        let mv = grid(1, 1, 1, &[1.0]);
        assert!(matches!(
            memory_read(&qk, &qv, &mk, &mv, ReadConfig::default()),
            Err(Error::Dimension(_))
        ));
        let mk = grid(1, 2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(memory_read(&qk, &qv, &mk, &mv, ReadConfig::default()).is_err());
    }

    #[test]
    fn options_change_similarity() {
        let qk = grid(1, 1, 4, &[2.0, 0.0, 0.0, 0.0]);
        let qv = grid(1, 1, 1, &[0.0]);
        let mk = grid(1, 2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0]);
        let mv = grid(1, 2, 1, &[1.0, 0.0]);
        let scaled = memory_read(
            &qk,
            &qv,
            &mk,
            &mv,
            ReadConfig {
                scale_by_channels: true,
                ..Default::default()
            },
        )
        .unwrap();
        // logits 2/2 and 0
        let want = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((scaled.weights.get(0, 0) - want).abs() < 1e-15);
        let unit = memory_read(
            &qk,
            &qv,
            &mk,
            &mv,
            ReadConfig {
                l2_normalize_keys: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((unit.weights.get(0, 0) - want).abs() < 1e-15);
    }

    #[test]
    fn downsample_examples() {
        let ones = ObjectMask::from_fn(4, 4, |_, _| true);
        assert!(downsample_mask(&ones, 2, 2)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 1.0));
        let one = ObjectMask::from_fn(4, 4, |r, c| r == 3 && c == 0);
        assert_eq!(downsample_mask(&one, 2, 2).unwrap().values(), &[0.0, 0.0, 0.25, 0.0]);
        assert_eq!(downsample_mask(&one, 4, 4).unwrap(), one);
        assert!(matches!(
            downsample_mask(&one, 3, 2),
            Err(Error::Resolution { .. })
        ));
    }

    #[test]
    fn off_mode_is_identity() {
        let f = grid(2, 2, 3, &[0.1, -2.0, 3.3, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 1.0, 2.0, 3.0]);
        let mask = ObjectMask::from_fn(4, 4, |r, _| r < 2);
        let gate = PriorGate::seeded(PriorMode::Off, 3, 1);
        assert_eq!(prior_enhance(&f, &mask, &gate).unwrap(), f);
    }

    #[test]
    fn zero_feature_stays_zero() {
        let f = FeatureGrid::zeros(2, 2, 3).unwrap();
        let mask = ObjectMask::from_fn(4, 4, |r, _| r < 2);
        for mode in [PriorMode::Weak, PriorMode::Strong] {
            let gate = PriorGate::seeded(mode, 3, 5);
            let out = prior_enhance(&f, &mask, &gate).unwrap();
            assert!(out.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn gate_parameters_follow_seed() {
        assert_eq!(
            PriorGate::seeded(PriorMode::Weak, 6, 11),
            PriorGate::seeded(PriorMode::Weak, 6, 11)
        );
        assert_ne!(
            PriorGate::seeded(PriorMode::Weak, 6, 11),
            PriorGate::seeded(PriorMode::Weak, 6, 12)
        );
    }

    #[test]
    fn mask_raises_gate() {
        let f = grid(1, 2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let mask = ObjectMask::from_fn(1, 2, |_, c| c == 0);
        let gate = PriorGate::seeded(PriorMode::Weak, 2, 3);
        let g = gate.gate_map(&f, &mask).unwrap();
        assert!(g[0] > 0.85 && g[1] < 0.4, "{g:?}");
    }
}
