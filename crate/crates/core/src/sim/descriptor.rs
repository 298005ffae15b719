//! Hand-built key/value descriptors standing in for learned encoders.
//!
//! Keys embed each cell's mean color and position on half circles
//! (`(cos(pi v), sin(pi v))` per coordinate), so the dot product between two
//! keys is a smooth similarity that only depends on color and position
//! differences. Values carry the mean color and, for memory frames, the
//! per-cell label occupancy.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FeatureGrid, LabeledMaskSet};

pub const COLOR_CHANNELS: usize = 3;
pub const KEY_CHANNELS: usize = 2 * COLOR_CHANNELS + 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescriptorConfig {
    /// Pixels per cell side.
    pub stride: usize,
    /// Scale of the color embedding; its square is the similarity gain per
    /// color channel.
    pub color_scale: f64,
    /// Scale of the position embedding.
    pub position_scale: f64,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            stride: 4,
            color_scale: 5.0,
            position_scale: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDescriptor {
    pub key: FeatureGrid,
    /// Mean color, followed by `object_count + 1` label-occupancy channels
    /// (background first) when labels were supplied.
    pub value: FeatureGrid,
}

fn half_circle(v: f64, scale: f64) -> [f64; 2] {
    [scale * (PI * v).cos(), scale * (PI * v).sin()]
}

/// Encodes one cell's key from its mean color and normalized position.
pub fn encode_key(color: &[f64], row_pos: f64, col_pos: f64, config: &DescriptorConfig) -> Vec<f64> {
    let mut key = Vec::with_capacity(KEY_CHANNELS);
    for &c in color {
        key.extend(half_circle(c, config.color_scale));
    }
    key.extend(half_circle(row_pos, config.position_scale));
    key.extend(half_circle(col_pos, config.position_scale));
    key
}

/// Builds the key and value grids of a frame.
///
/// `labels` turns the descriptor into a memory descriptor whose value also
/// holds label occupancy; without it only the color is stored.
pub fn extract_descriptor(
    image: &[f64],
    height: usize,
    width: usize,
    labels: Option<&LabeledMaskSet>,
    config: &DescriptorConfig,
) -> Result<FrameDescriptor> {
    let stride = config.stride;
    if stride == 0 || height % stride != 0 || width % stride != 0 {
        return Err(Error::Resolution {
            from_h: height,
            from_w: width,
            to_h: if stride == 0 { 0 } else { height / stride },
            to_w: if stride == 0 { 0 } else { width / stride },
        });
    }
    if image.len() != height * width * COLOR_CHANNELS {
        return Err(Error::Dimension(format!(
            "image of {height}x{width} needs {} values, got {}",
            height * width * COLOR_CHANNELS,
            image.len()
        )));
    }
    let label_map = match labels {
        Some(set) => {
            if set.height() != height || set.width() != width {
                return Err(Error::Dimension("labels do not match the frame size".into()));
            }
            Some((set.label_map(), set.object_count()))
        }
        None => None,
    };
    let (gh, gw) = (height / stride, width / stride);
    let area = (stride * stride) as f64;
    let label_channels = label_map.as_ref().map_or(0, |(_, n)| n + 1);
    let mut keys = Vec::with_capacity(gh * gw * KEY_CHANNELS);
    let mut values = Vec::with_capacity(gh * gw * (COLOR_CHANNELS + label_channels));
    let mut occupancy = vec![0.0; label_channels];
    for gr in 0..gh {
        for gc in 0..gw {
            let mut color = [0.0; COLOR_CHANNELS];
            occupancy.iter_mut().for_each(|v| *v = 0.0);
            for r in gr * stride..(gr + 1) * stride {
                for c in gc * stride..(gc + 1) * stride {
                    let i = r * width + c;
                    for (acc, v) in color.iter_mut().zip(&image[i * 3..i * 3 + 3]) {
                        *acc += v;
                    }
                    if let Some((map, _)) = &label_map {
                        occupancy[map[i] as usize] += 1.0;
                    }
                }
            }
            color.iter_mut().for_each(|v| *v /= area);
            let row_pos = (gr as f64 + 0.5) / gh as f64;
            let col_pos = (gc as f64 + 0.5) / gw as f64;
            keys.extend(encode_key(&color, row_pos, col_pos, config));
            values.extend_from_slice(&color);
            values.extend(occupancy.iter().map(|v| v / area));
        }
    }
    Ok(FrameDescriptor {
        key: FeatureGrid::new(gh, gw, KEY_CHANNELS, keys)?,
        value: FeatureGrid::new(gh, gw, COLOR_CHANNELS + label_channels, values)?,
    })
}
