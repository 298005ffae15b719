//! Deterministic synthetic videos of moving discs and rectangles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::LabeledMaskSet;

pub type Color = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Shape {
    Disc { radius: f64 },
    Rect { half_height: f64, half_width: f64 },
}

impl Shape {
    fn contains(&self, dy: f64, dx: f64) -> bool {
        match *self {
            Shape::Disc { radius } => dy * dy + dx * dx <= radius * radius,
            Shape::Rect {
                half_height,
                half_width,
            } => dy.abs() <= half_height && dx.abs() <= half_width,
        }
    }
}

/// Position of a mover's centre at a given frame, in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub frame: usize,
    pub y: f64,
    pub x: f64,
}

/// From `start` on, the mover is drawn in `color` with speckle of standard
/// deviation `texture`. A nonzero `ramp` blends linearly from the previous
/// appearance over that many frames. Background phases ignore `texture`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppearancePhase {
    pub start: usize,
    pub color: Color,
    #[serde(default)]
    pub texture: f64,
    #[serde(default)]
    pub ramp: usize,
}

/// Color and texture in effect at frame `t`.
fn appearance_at(base: (Color, f64), phases: &[AppearancePhase], t: usize) -> (Color, f64) {
    let Some(phase) = phases.iter().filter(|p| p.start <= t).max_by_key(|p| p.start) else {
        return base;
    };
    if t >= phase.start + phase.ramp {
        return (phase.color, phase.texture);
    }
    let (from, from_texture) = if phase.start == 0 {
        base
    } else {
        appearance_at(base, phases, phase.start - 1)
    };
    let s = (t - phase.start) as f64 / phase.ramp as f64;
    (
        std::array::from_fn(|i| from[i] + s * (phase.color[i] - from[i])),
        from_texture + s * (phase.texture - from_texture),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mover {
    pub shape: Shape,
    pub color: Color,
    /// Standard deviation of the per-pixel speckle drawn on the mover.
    #[serde(default)]
    pub texture: f64,
    pub waypoints: Vec<Waypoint>,
    /// Half-open frame ranges `[start, end)` during which the mover is hidden.
    #[serde(default)]
    pub occlusions: Vec<[usize; 2]>,
    #[serde(default)]
    pub phases: Vec<AppearancePhase>,
}

impl Mover {
    /// Centre at frame `t`, interpolated linearly between waypoints and held
    /// constant outside their range.
    pub fn position(&self, t: usize) -> (f64, f64) {
        let w = &self.waypoints;
        if t <= w[0].frame {
            return (w[0].y, w[0].x);
        }
        for pair in w.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if t <= b.frame {
                let span = (b.frame - a.frame) as f64;
                let s = if span > 0.0 {
                    (t - a.frame) as f64 / span
                } else {
                    1.0
                };
                return (a.y + s * (b.y - a.y), a.x + s * (b.x - a.x));
            }
        }
        let last = w[w.len() - 1];
        (last.y, last.x)
    }

    pub fn visible(&self, t: usize) -> bool {
        !self.occlusions.iter().any(|&[s, e]| (s..e).contains(&t))
    }

    pub fn color_at(&self, t: usize) -> Color {
        self.appearance_at(t).0
    }

    pub fn appearance_at(&self, t: usize) -> (Color, f64) {
        appearance_at((self.color, self.texture), &self.phases, t)
    }

    fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(Error::Spec("mover needs at least one waypoint".into()));
        }
        for pair in self.waypoints.windows(2) {
            if pair[1].frame < pair[0].frame {
                return Err(Error::Spec("waypoints must be ordered by frame".into()));
            }
        }
        for wp in &self.waypoints {
            let inside = (0.0..=height as f64).contains(&wp.y) && (0.0..=width as f64).contains(&wp.x);
            if !inside || !wp.y.is_finite() || !wp.x.is_finite() {
                return Err(Error::Spec(format!(
                    "waypoint ({}, {}) at frame {} lies outside the {height}x{width} frame",
                    wp.y, wp.x, wp.frame
                )));
            }
        }
        let valid_color = |c: &Color| c.iter().all(|v| (0.0..=1.0).contains(v));
        if !valid_color(&self.color) || !self.phases.iter().all(|p| valid_color(&p.color)) {
            return Err(Error::Spec("colors must lie in [0, 1]".into()));
        }
        let valid_texture = |v: f64| v >= 0.0 && v.is_finite();
        if !valid_texture(self.texture) || !self.phases.iter().all(|p| valid_texture(p.texture)) {
            return Err(Error::Spec("texture must be finite and non-negative".into()));
        }
        match self.shape {
            Shape::Disc { radius } if !(radius > 0.0) => {
                Err(Error::Spec("disc radius must be positive".into()))
            }
            Shape::Rect {
                half_height,
                half_width,
            } if !(half_height > 0.0 && half_width > 0.0) => {
                Err(Error::Spec("rectangle extents must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Full description of a synthetic video; rendering is a pure function of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoSpec {
    pub frame_count: usize,
    pub height: usize,
    pub width: usize,
    pub background: Color,
    #[serde(default)]
    pub background_phases: Vec<AppearancePhase>,
    /// Labelled objects, ids `1..=objects.len()`; later objects are drawn on top.
    pub objects: Vec<Mover>,
    /// Unlabelled movers drawn beneath the objects.
    #[serde(default)]
    pub distractors: Vec<Mover>,
    /// Standard deviation of per-pixel Gaussian color noise.
    #[serde(default)]
    pub pixel_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

/// One rendered frame: RGB pixels (row-major, 3 values per pixel) and the
/// ground-truth label map.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub height: usize,
    pub width: usize,
    pub image: Vec<f64>,
    pub labels: Vec<u8>,
}

impl Frame {
    pub fn truth(&self, object_count: usize) -> LabeledMaskSet {
        LabeledMaskSet::from_label_map(self.height, self.width, &self.labels, object_count)
            .expect("frame labels match frame size")
    }
}

const TEXTURE_STREAM: u64 = 0x7E47_u64;

pub(crate) fn mix_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl VideoSpec {
    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_count < 2 {
            return Err(Error::Spec("a video needs at least two frames".into()));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::Spec("frame size must be positive".into()));
        }
        if self.objects.is_empty() || self.objects.len() > u8::MAX as usize {
            return Err(Error::Spec(format!(
                "object count must be in 1..=255, got {}",
                self.objects.len()
            )));
        }
        if !(self.pixel_noise >= 0.0) {
            return Err(Error::Spec("pixel noise must be non-negative".into()));
        }
        for m in self.objects.iter().chain(&self.distractors) {
            m.validate(self.height, self.width)?;
        }
        Ok(())
    }

    pub fn background_at(&self, t: usize) -> Color {
        appearance_at((self.background, 0.0), &self.background_phases, t).0
    }

    /// Renders frame `t`. Assumes the video has been validated.
    pub fn render(&self, t: usize) -> Frame {
        let (h, w) = (self.height, self.width);
        let bg = self.background_at(t);
        let mut image = Vec::with_capacity(h * w * 3);
        for _ in 0..h * w {
            image.extend_from_slice(&bg);
        }
        let mut labels = vec![0u8; h * w];

        let paint = |mover: &Mover, id: u64, label: u8, image: &mut [f64], labels: &mut [u8]| {
            if !mover.visible(t) {
                return;
            }
            let (cy, cx) = mover.position(t);
            let (color, texture) = mover.appearance_at(t);
            let stream = mix_seed(self.seed ^ TEXTURE_STREAM, id);
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(stream, t as u64));
            for r in 0..h {
                for c in 0..w {
                    if mover.shape.contains(r as f64 + 0.5 - cy, c as f64 + 0.5 - cx) {
                        let i = r * w + c;
                        for (px, base) in image[i * 3..i * 3 + 3].iter_mut().zip(color) {
                            *px = if texture > 0.0 {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                (base + texture * z).clamp(0.0, 1.0)
                            } else {
                                base
                            };
                        }
                        labels[i] = label;
                    }
                }
            }
        };
        let n = self.objects.len() as u64;
        for (k, d) in self.distractors.iter().enumerate() {
            paint(d, n + k as u64, 0, &mut image, &mut labels);
        }
        for (k, o) in self.objects.iter().enumerate() {
            paint(o, k as u64, (k + 1) as u8, &mut image, &mut labels);
        }

        if self.pixel_noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, t as u64));
            for v in image.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = (*v + self.pixel_noise * z).clamp(0.0, 1.0);
            }
        }
        Frame {
            index: t,
            height: h,
            width: w,
            image,
            labels,
        }
    }
}

/// Validates the video and renders every frame.
pub fn generate_video(spec: &VideoSpec) -> Result<Vec<Frame>> {
    spec.validate()?;
    Ok((0..spec.frame_count).map(|t| spec.render(t)).collect())
}

/// Named scene families used by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Grid-aligned stationary rectangles.
    Static,
    /// Discs travelling along random waypoints.
    Moving,
    /// Moving targets among look-alike distractors.
    Distractor,
    /// A target whose appearance changes for the middle third of the video
    /// and then returns to the original one.
    Revisit,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Static => "static",
            Scenario::Moving => "moving",
            Scenario::Distractor => "distractor",
            Scenario::Revisit => "revisit",
        }
    }

    /// Builds the scene for `seed`. Sizes are in pixels.
    pub fn build(self, frame_count: usize, height: usize, width: usize, seed: u64) -> VideoSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5CE7E));
        match self {
            Scenario::Static => static_scene(frame_count, height, width, seed),
            Scenario::Moving => moving_scene(&mut rng, frame_count, height, width, seed),
            Scenario::Distractor => distractor_scene(&mut rng, frame_count, height, width, seed),
            Scenario::Revisit => revisit_scene(&mut rng, frame_count, height, width, seed),
        }
    }
}

const PALETTE: [Color; 4] = [
    [0.85, 0.2, 0.2],
    [0.2, 0.75, 0.25],
    [0.2, 0.3, 0.9],
    [0.9, 0.8, 0.15],
];

fn static_scene(frame_count: usize, height: usize, width: usize, seed: u64) -> VideoSpec {
    let (h, w) = (height as f64, width as f64);
    let rect = |cy: f64, cx: f64, color: Color| Mover {
        shape: Shape::Rect {
            half_height: (h / 8.0).floor(),
            half_width: (w / 8.0).floor(),
        },
        color,
        texture: 0.0,
        waypoints: vec![Waypoint {
            frame: 0,
            y: cy,
            x: cx,
        }],
        occlusions: vec![],
        phases: vec![],
    };
    VideoSpec {
        frame_count,
        height,
        width,
        background: [0.5, 0.5, 0.5],
        background_phases: vec![],
        objects: vec![
            rect((h / 4.0).round(), (w / 4.0).round(), PALETTE[0]),
            rect((3.0 * h / 4.0).round(), (3.0 * w / 4.0).round(), PALETTE[2]),
        ],
        distractors: vec![],
        pixel_noise: 0.0,
        seed,
    }
}

fn random_path(
    rng: &mut ChaCha8Rng,
    frame_count: usize,
    height: usize,
    width: usize,
    margin: f64,
    step: usize,
) -> Vec<Waypoint> {
    let (h, w) = (height as f64, width as f64);
    let mut out = Vec::new();
    let mut frame = 0;
    loop {
        out.push(Waypoint {
            frame,
            y: rng.gen_range(margin..h - margin),
            x: rng.gen_range(margin..w - margin),
        });
        if frame >= frame_count {
            break;
        }
        frame += step;
    }
    out
}

fn moving_scene(
    rng: &mut ChaCha8Rng,
    frame_count: usize,
    height: usize,
    width: usize,
    seed: u64,
) -> VideoSpec {
    let size = height.min(width) as f64;
    let radius = size * 0.17;
    let objects = (0..2)
        .map(|k| Mover {
            shape: Shape::Disc { radius },
            color: PALETTE[k * 2],
            texture: 0.0,
            waypoints: random_path(rng, frame_count, height, width, radius + 1.0, 40),
            occlusions: vec![],
            phases: vec![],
        })
        .collect();
    VideoSpec {
        frame_count,
        height,
        width,
        background: [0.5, 0.5, 0.5],
        background_phases: vec![],
        objects,
        distractors: vec![],
        pixel_noise: 0.02,
        seed,
    }
}

fn distractor_scene(
    rng: &mut ChaCha8Rng,
    frame_count: usize,
    height: usize,
    width: usize,
    seed: u64,
) -> VideoSpec {
    let size = height.min(width) as f64;
    let radius = size * 0.15;
    let target = PALETTE[0];
    let objects = vec![Mover {
        shape: Shape::Disc { radius },
        color: target,
        texture: 0.0,
        waypoints: random_path(rng, frame_count, height, width, radius + 1.0, 60),
        occlusions: vec![],
        phases: vec![],
    }];
    let distractors = (0..2)
        .map(|_| {
            let shade = rng.gen_range(-0.06..0.06);
            Mover {
                shape: Shape::Disc {
                    radius: radius * rng.gen_range(0.7..1.0),
                },
                color: [
                    (target[0] + shade).clamp(0.0, 1.0),
                    target[1] + 0.05,
                    target[2],
                ],
                texture: 0.0,
                waypoints: random_path(rng, frame_count, height, width, radius, 60),
                occlusions: vec![],
                phases: vec![],
            }
        })
        .collect();
    VideoSpec {
        frame_count,
        height,
        width,
        background: [0.5, 0.5, 0.5],
        background_phases: vec![],
        objects,
        distractors,
        pixel_noise: 0.02,
        seed,
    }
}

/// Speckle of the revisit scene's second appearance.
pub const B_TEXTURE: f64 = 0.15;

fn revisit_scene(
    rng: &mut ChaCha8Rng,
    frame_count: usize,
    height: usize,
    width: usize,
    seed: u64,
) -> VideoSpec {
    let (h, w) = (height as f64, width as f64);
    let size = h.min(w);
    let radius = size * 0.16;
    let orbit = size * 0.15;
    // Start in the top-left corner, then circle a centre in the bottom-right
    // quadrant for the rest of the video; the start is never revisited.
    let (cy, cx) = (h - radius - orbit - 1.0, w - radius - orbit - 1.0);
    let start_angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let period = rng.gen_range(90..130) as f64;
    let mut waypoints = vec![Waypoint {
        frame: 0,
        y: radius + 1.0,
        x: radius + 1.0,
    }];
    let settle = (frame_count / 10).max(20);
    let mut frame = settle;
    while frame <= frame_count + 10 {
        let a = start_angle + std::f64::consts::TAU * (frame - settle) as f64 / period;
        waypoints.push(Waypoint {
            frame,
            y: cy + orbit * a.sin(),
            x: cx + orbit * a.cos(),
        });
        frame += 5;
    }
    let a_color = [0.85, 0.25, 0.25];
    let via_color = [0.85, 0.25, 0.85];
    let b_color = [0.25, 0.25, 0.85];
    let third = frame_count / 3;
    let ramp = (third / 8).max(1);
    VideoSpec {
        frame_count,
        height,
        width,
        background: [0.5, 0.5, 0.5],
        background_phases: vec![],
        objects: vec![Mover {
            shape: Shape::Disc { radius },
            color: a_color,
            texture: 0.0,
            waypoints,
            occlusions: vec![],
            // gradual drift into a speckled B through a color that stays far
            // from the background, then an abrupt return to a clean A
            phases: vec![
                AppearancePhase {
                    start: third,
                    color: via_color,
                    texture: B_TEXTURE,
                    ramp,
                },
                AppearancePhase {
                    start: third + ramp,
                    color: b_color,
                    texture: B_TEXTURE,
                    ramp,
                },
                AppearancePhase {
                    start: 2 * third,
                    color: a_color,
                    texture: 0.0,
                    ramp: 0,
                },
            ],
        }],
        distractors: vec![],
        pixel_noise: 0.02,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc_at(y: f64, x: f64) -> Mover {
        Mover {
            shape: Shape::Disc { radius: 4.0 },
            color: [1.0, 0.0, 0.0],
            texture: 0.0,
            waypoints: vec![Waypoint { frame: 0, y, x }],
            occlusions: vec![],
            phases: vec![],
        }
    }

    fn spec(objects: Vec<Mover>) -> VideoSpec {
        VideoSpec {
            frame_count: 30,
            height: 16,
            width: 16,
            background: [0.5, 0.5, 0.5],
            background_phases: vec![],
            objects,
            distractors: vec![],
            pixel_noise: 0.0,
            seed: 3,
        }
    }

    #[test]
    fn stationary_disc_is_constant() {
        let frames = generate_video(&spec(vec![disc_at(8.0, 8.0)])).unwrap();
        assert!(frames.windows(2).all(|p| p[0].labels == p[1].labels));
        assert!(frames[0].labels.iter().any(|&l| l == 1));
    }

    #[test]
    fn occlusion_window_hides_object() {
        let mut m = disc_at(8.0, 8.0);
        m.occlusions = vec![[10, 20]];
        let frames = generate_video(&spec(vec![m])).unwrap();
        for f in &frames {
            let empty = f.labels.iter().all(|&l| l == 0);
            assert_eq!(empty, (10..20).contains(&f.index), "frame {}", f.index);
        }
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let mut s = Scenario::Moving.build(40, 32, 32, 17);
        s.pixel_noise = 0.05;
        let a = generate_video(&s).unwrap();
        let b = generate_video(&s).unwrap();
        assert_eq!(a, b);
        let other = Scenario::Moving.build(40, 32, 32, 18);
        assert_ne!(a, generate_video(&other).unwrap());
    }

    #[test]
    fn waypoint_outside_frame_is_rejected() {
        let bad = spec(vec![disc_at(40.0, 8.0)]);
        assert!(matches!(generate_video(&bad), Err(Error::Spec(_))));
    }

    #[test]
    fn interpolation_and_phases() {
        let mut m = disc_at(0.0, 0.0);
        m.waypoints.push(Waypoint {
            frame: 10,
            y: 10.0,
            x: 5.0,
        });
        m.phases = vec![
            AppearancePhase {
                start: 4,
                color: [0.0, 1.0, 0.0],
                texture: 0.0,
                ramp: 0,
            },
            AppearancePhase {
                start: 8,
                color: [0.0, 0.0, 1.0],
                texture: 0.4,
                ramp: 4,
            },
        ];
        assert_eq!(m.appearance_at(10).1, 0.2);
        assert_eq!(m.position(5), (5.0, 2.5));
        assert_eq!(m.position(50), (10.0, 5.0));
        assert_eq!(m.color_at(3), [1.0, 0.0, 0.0]);
        assert_eq!(m.color_at(4), [0.0, 1.0, 0.0]);
        assert_eq!(m.color_at(8), [0.0, 1.0, 0.0]);
        assert_eq!(m.color_at(10), [0.0, 0.5, 0.5]);
        assert_eq!(m.color_at(12), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn presets_validate() {
        for s in [
            Scenario::Static,
            Scenario::Moving,
            Scenario::Distractor,
            Scenario::Revisit,
        ] {
            for seed in 0..5 {
                s.build(60, 32, 32, seed).validate().unwrap();
                s.build(60, 64, 64, seed).validate().unwrap();
            }
        }
    }
}
