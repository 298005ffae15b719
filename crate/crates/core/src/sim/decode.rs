//! Turns retrieved label occupancy back into per-pixel object masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FeatureGrid, LabeledMaskSet};
use crate::readout::ReadOutput;
use crate::sim::descriptor::COLOR_CHANNELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Upsample {
    /// Every pixel takes its cell's distribution.
    Nearest,
    /// Distributions are interpolated between cell centres.
    Bilinear,
    /// Joint bilateral upsampling: each pixel averages the distributions of
    /// the surrounding 3x3 cells, weighted by distance to the cell centre and
    /// by how close the pixel's color is to the cell's mean color.
    #[default]
    Guided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub upsample: Upsample,
    /// Color bandwidth of the guided mode.
    pub guide_sigma: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            upsample: Upsample::Guided,
            guide_sigma: 0.1,
        }
    }
}

impl DecodeConfig {
    pub fn with_upsample(upsample: Upsample) -> Self {
        Self {
            upsample,
            ..Self::default()
        }
    }
}

/// Decodes the label channels of a memory read into hard object masks.
///
/// `image` is the query frame (row-major RGB); only the guided mode reads it.
pub fn decode_labels(
    read: &ReadOutput,
    object_count: usize,
    stride: usize,
    config: &DecodeConfig,
    image: Option<&[f64]>,
) -> Result<LabeledMaskSet> {
    decode_grid(&read.combined, object_count, stride, config, image)
}

/// Argmax over the trailing `object_count + 1` channels of `combined`
/// (background first, lowest channel wins ties), upsampled by `stride`.
pub fn decode_grid(
    combined: &FeatureGrid,
    object_count: usize,
    stride: usize,
    config: &DecodeConfig,
    image: Option<&[f64]>,
) -> Result<LabeledMaskSet> {
    let label_channels = object_count + 1;
    let expected = 2 * COLOR_CHANNELS + label_channels;
    if combined.channels() != expected {
        return Err(Error::Decode(format!(
            "{} objects need {expected} combined channels, got {}",
            object_count,
            combined.channels()
        )));
    }
    if stride == 0 {
        return Err(Error::Decode("stride must be positive".into()));
    }
    let offset = expected - label_channels;
    let (gh, gw) = (combined.height(), combined.width());
    let (h, w) = (gh * stride, gw * stride);
    let image = match (config.upsample, image) {
        (Upsample::Guided, None) => {
            return Err(Error::Decode("guided upsampling needs the frame image".into()))
        }
        (Upsample::Guided, Some(img)) if img.len() != h * w * COLOR_CHANNELS => {
            return Err(Error::Decode(format!(
                "guide image has {} values, expected {}",
                img.len(),
                h * w * COLOR_CHANNELS
            )))
        }
        (_, img) => img,
    };
    let labels_at = |gr: usize, gc: usize| &combined.at(gr, gc)[offset..];
    let s = stride as f64;
    let spatial_den = 2.0 * s * s;
    let color_den = 2.0 * config.guide_sigma * config.guide_sigma;

    let mut map = vec![0u8; h * w];
    let mut dist = vec![0.0; label_channels];
    for r in 0..h {
        for c in 0..w {
            let (gr, gc) = (r / stride, c / stride);
            match config.upsample {
                Upsample::Nearest => dist.copy_from_slice(labels_at(gr, gc)),
                Upsample::Bilinear => {
                    let fy = ((r as f64 + 0.5) / s - 0.5).clamp(0.0, (gh - 1) as f64);
                    let fx = ((c as f64 + 0.5) / s - 0.5).clamp(0.0, (gw - 1) as f64);
                    let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
                    let (y1, x1) = ((y0 + 1).min(gh - 1), (x0 + 1).min(gw - 1));
                    let (ty, tx) = (fy - y0 as f64, fx - x0 as f64);
                    for (k, d) in dist.iter_mut().enumerate() {
                        let top = labels_at(y0, x0)[k] * (1.0 - tx) + labels_at(y0, x1)[k] * tx;
                        let bottom = labels_at(y1, x0)[k] * (1.0 - tx) + labels_at(y1, x1)[k] * tx;
                        *d = top * (1.0 - ty) + bottom * ty;
                    }
                }
                Upsample::Guided => {
                    let i = (r * w + c) * COLOR_CHANNELS;
                    let pixel = &image.expect("checked above")[i..i + COLOR_CHANNELS];
                    dist.iter_mut().for_each(|d| *d = 0.0);
                    let mut total = 0.0;
                    for nr in gr.saturating_sub(1)..(gr + 2).min(gh) {
                        for nc in gc.saturating_sub(1)..(gc + 2).min(gw) {
                            let dy = (nr as f64 + 0.5) * s - (r as f64 + 0.5);
                            let dx = (nc as f64 + 0.5) * s - (c as f64 + 0.5);
                            let color = &combined.at(nr, nc)[..COLOR_CHANNELS];
                            let dc: f64 = color
                                .iter()
                                .zip(pixel)
                                .map(|(a, b)| (a - b) * (a - b))
                                .sum();
                            let weight = (-(dy * dy + dx * dx) / spatial_den - dc / color_den).exp();
                            total += weight;
                            for (d, l) in dist.iter_mut().zip(labels_at(nr, nc)) {
                                *d += weight * l;
                            }
                        }
                    }
                    if !(total > 0.0) {
                        dist.copy_from_slice(labels_at(gr, gc));
                    }
                }
            }
            let mut best = 0;
            for k in 1..label_channels {
                if dist[k] > dist[best] {
                    best = k;
                }
            }
            map[r * w + c] = best as u8;
        }
    }
    LabeledMaskSet::from_label_map(h, w, &map, object_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn combined(gh: usize, gw: usize, cells: &[([f64; 3], [f64; 2])]) -> FeatureGrid {
        let data = cells
            .iter()
            .flat_map(|(color, l)| {
                let mut v = color.to_vec();
                v.extend([0.0; 3]);
                v.extend(l);
                v
            })
            .collect();
        FeatureGrid::new(gh, gw, 8, data).unwrap()
    }

    fn plain(gh: usize, gw: usize, labels: &[[f64; 2]]) -> FeatureGrid {
        let cells: Vec<_> = labels.iter().map(|l| ([0.0; 3], *l)).collect();
        combined(gh, gw, &cells)
    }

    #[test]
    fn uniform_distribution_goes_to_background() {
        let g = plain(1, 2, &[[0.5, 0.5], [0.5, 0.5]]);
        let image = vec![0.0; 2 * 4 * 3];
        for up in [Upsample::Nearest, Upsample::Bilinear, Upsample::Guided] {
            let set = decode_grid(&g, 1, 2, &DecodeConfig::with_upsample(up), Some(&image)).unwrap();
            assert_eq!(set.masks()[0].foreground_count(), 0);
        }
    }

    #[test]
    fn nearest_upsamples_blocks() {
        let g = plain(1, 2, &[[0.2, 0.8], [0.9, 0.1]]);
        let cfg = DecodeConfig::with_upsample(Upsample::Nearest);
        let set = decode_grid(&g, 1, 2, &cfg, None).unwrap();
        assert_eq!((set.height(), set.width()), (2, 4));
        assert_eq!(set.label_map(), vec![1, 1, 0, 0, 1, 1, 0, 0]);
    }

    #[test]
    fn bilinear_moves_boundary_between_centres() {
        // object weight 1 in the left cell, 0.4 in the right one
        let g = plain(1, 2, &[[0.0, 1.0], [0.6, 0.4]]);
        let cfg = DecodeConfig::with_upsample(Upsample::Bilinear);
        let set = decode_grid(&g, 1, 4, &cfg, None).unwrap();
        let row: Vec<u8> = set.label_map()[..8].to_vec();
        assert_eq!(row, vec![1, 1, 1, 1, 1, 0, 0, 0]);
    }

    #[test]
    fn guided_follows_pixel_colors() {
        // three cells in a row: pure object (red), mixed, pure background (gray)
        let red = [0.9, 0.1, 0.1];
        let gray = [0.5, 0.5, 0.5];
        let mixed = [0.7, 0.3, 0.3];
        let g = combined(1, 3, &[(red, [0.0, 1.0]), (mixed, [0.5, 0.5]), (gray, [1.0, 0.0])]);
        // the object edge runs through the middle cell after pixel column 5
        let mut image = Vec::new();
        for _ in 0..4 {
            for c in 0..12 {
                image.extend(if c < 6 { red } else { gray });
            }
        }
        let set = decode_grid(&g, 1, 4, &DecodeConfig::default(), Some(&image)).unwrap();
        let row: Vec<u8> = set.label_map()[..12].to_vec();
        assert_eq!(row, vec![1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn guided_requires_image() {
        let g = plain(1, 1, &[[0.5, 0.5]]);
        assert!(matches!(
            decode_grid(&g, 1, 2, &DecodeConfig::default(), None),
            Err(Error::Decode(_))
        ));
    }

    #[test]
    fn channel_mismatch_is_decode_error() {
        let g = plain(1, 1, &[[0.5, 0.5]]);
        assert!(matches!(
            decode_grid(&g, 2, 2, &DecodeConfig::with_upsample(Upsample::Nearest), None),
            Err(Error::Decode(_))
        ));
    }
}
