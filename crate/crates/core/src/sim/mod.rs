//! Synthetic videos, stand-in encoders and decoder, metrics and experiments.

pub mod config;
pub mod decode;
pub mod descriptor;
pub mod episode;
pub mod metrics;
pub mod sweep;
pub mod video;

pub use config::RunConfig;
pub use episode::{run_episode, run_episode_observed, run_seed, EvalResult, FrameRecord};
pub use sweep::{sweep, SweepAxis, SweepRow, SweepValue};
pub use video::{generate_video, Scenario, VideoSpec};
