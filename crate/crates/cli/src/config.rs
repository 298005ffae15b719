//! Reads run configurations from TOML files or from earlier run manifests.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};
use vosmem::sim::RunConfig;

use crate::manifest::RunManifest;

#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Present when the file was a manifest of an earlier run.
    pub manifest: Option<RunManifest>,
}

/// Loads and validates a config. A `.json` file is read as a run manifest
/// and its embedded config is reused.
pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    let loaded = if is_json {
        let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| {
            anyhow::anyhow!(
                "{}:{}:{}: {e}",
                path.display(),
                e.line(),
                e.column()
            )
        })?;
        LoadedConfig {
            config: manifest.config.clone(),
            manifest: Some(manifest),
        }
    } else {
        let config = parse_toml(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        LoadedConfig {
            config,
            manifest: None,
        }
    };
    loaded
        .config
        .validate()
        .with_context(|| format!("{} was rejected", path.display()))?;
    Ok(loaded)
}

/// Parses TOML text into a config. Errors carry the line and the offending
/// key as reported by the TOML parser.
pub fn parse_toml(text: &str) -> Result<RunConfig> {
    match toml::from_str::<RunConfig>(text) {
        Ok(config) => Ok(config),
        Err(e) => {
            let location = e
                .span()
                .map(|span| {
                    let line = text[..span.start].matches('\n').count() + 1;
                    format!("line {line}: ")
                })
                .unwrap_or_default();
            bail!("{location}{}", e.message())
        }
    }
}

/// SHA-256 of the config's canonical JSON form.
pub fn config_digest(config: &RunConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Parses `1,2,5` and `1-10` style seed lists.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (
                    a.trim().parse().with_context(|| format!("bad seed range `{part}`"))?,
                    b.trim().parse().with_context(|| format!("bad seed range `{part}`"))?,
                );
                if a > b {
                    bail!("seed range `{part}` is empty");
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().with_context(|| format!("bad seed `{part}`"))?),
        }
    }
    if seeds.is_empty() {
        bail!("seed list is empty");
    }
    Ok(seeds)
}
