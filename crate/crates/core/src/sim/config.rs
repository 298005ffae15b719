//! Declarative run configuration shared by episodes, sweeps and benchmarks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::membank::BankPolicy;
use crate::readout::{PriorMode, ReadConfig, DEFAULT_STRONG_STRENGTH};
use crate::sim::decode::DecodeConfig;
use crate::sim::descriptor::DescriptorConfig;
use crate::sim::video::{Scenario, VideoSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VideoConfig {
    /// Named scene family, rebuilt for every seed.
    pub scenario: Option<Scenario>,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Fully explicit scene; takes precedence over `scenario`. Its seed is
    /// replaced by the run seed.
    pub custom: Option<VideoSpec>,
}

impl Default for VideoConfig {
    fn default() -> Self {
        Self {
            scenario: Some(Scenario::Moving),
            frames: 60,
            height: 64,
            width: 64,
            custom: None,
        }
    }
}

impl VideoConfig {
    pub fn build(&self, seed: u64) -> Result<VideoSpec> {
        let spec = match (&self.custom, self.scenario) {
            (Some(custom), _) => VideoSpec {
                seed,
                ..custom.clone()
            },
            (None, Some(scenario)) => scenario.build(self.frames, self.height, self.width, seed),
            (None, None) => {
                return Err(Error::Config(
                    "video needs either a scenario or a custom spec".into(),
                ))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub mode: PriorMode,
    /// Feature-shift strength for strong mode.
    pub strength: f64,
    /// Seed of the gate parameters.
    pub seed: u64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            mode: PriorMode::Weak,
            strength: DEFAULT_STRONG_STRENGTH,
            seed: 7,
        }
    }
}

/// Replaces decoded masks of chosen frames by translated and dilated copies
/// before scoring and admission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionConfig {
    /// Frames that are always corrupted.
    pub frames: Vec<usize>,
    /// Probability that any other frame `t >= 1` is corrupted.
    pub rate: f64,
    /// Translation in pixels along both axes; the sign is drawn per frame.
    pub shift: usize,
    /// Dilation radius in pixels applied after the translation.
    pub dilate: usize,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            frames: Vec::new(),
            rate: 0.0,
            shift: 8,
            dilate: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    /// Standard deviation of the oracle's Gaussian noise.
    pub noise: f64,
    pub corruption: CorruptionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub video: VideoConfig,
    pub policy: BankPolicy,
    pub prior: PriorConfig,
    pub read: ReadConfig,
    pub descriptor: DescriptorConfig,
    pub decode: DecodeConfig,
    pub scorer: ScorerConfig,
    /// Boundary tolerance in pixels; defaults to `ceil(0.008 * diagonal)`.
    pub boundary_tolerance: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1],
            video: VideoConfig::default(),
            policy: BankPolicy::default(),
            prior: PriorConfig::default(),
            read: ReadConfig::default(),
            descriptor: DescriptorConfig::default(),
            decode: DecodeConfig::default(),
            scorer: ScorerConfig::default(),
            boundary_tolerance: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.scorer.noise >= 0.0) {
            return Err(Error::Config("scorer noise must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.scorer.corruption.rate) {
            return Err(Error::Config("corruption rate must lie in [0, 1]".into()));
        }
        if self.descriptor.stride == 0 {
            return Err(Error::Config("descriptor stride must be positive".into()));
        }
        if self.video.custom.is_none() {
            let (h, w, s) = (self.video.height, self.video.width, self.descriptor.stride);
            if h == 0 || w == 0 || h % s != 0 || w % s != 0 {
                return Err(Error::Config(format!(
                    "frame size {h}x{w} must be a positive multiple of stride {s}"
                )));
            }
            if self.video.frames < 2 {
                return Err(Error::Config("a video needs at least two frames".into()));
            }
        }
        Ok(())
    }
}
