//! Config loading, CSV tables and run manifests for the `vosmem` binary.

pub mod check;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod output;

pub use commands::{bench, simulate, sweep_cmd, BenchOptions};
pub use config::{load_config, parse_seeds, LoadedConfig};
pub use manifest::RunManifest;

/// Version of every CSV layout written by this crate.
pub const SCHEMA_VERSION: u32 = 1;
