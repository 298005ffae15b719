//! One-axis parameter sweeps averaged over seeds.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sim::config::RunConfig;
use crate::sim::episode::run_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Threshold,
    Capacity,
    Interval,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Threshold => "threshold",
            SweepAxis::Capacity => "capacity",
            SweepAxis::Interval => "interval",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" | "sigma" => Ok(SweepAxis::Threshold),
            "capacity" => Ok(SweepAxis::Capacity),
            "interval" => Ok(SweepAxis::Interval),
            other => Err(Error::Config(format!(
                "unknown sweep axis `{other}` (expected threshold, capacity or interval)"
            ))),
        }
    }
}

/// A parsed axis value. Capacity also accepts `unlimited`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepValue {
    Threshold(f64),
    Capacity(Option<usize>),
    Interval(usize),
}

impl fmt::Display for SweepValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepValue::Threshold(v) => write!(f, "{v}"),
            SweepValue::Capacity(Some(c)) => write!(f, "{c}"),
            SweepValue::Capacity(None) => f.write_str("unlimited"),
            SweepValue::Interval(n) => write!(f, "{n}"),
        }
    }
}

pub fn parse_value(axis: SweepAxis, text: &str) -> Result<SweepValue> {
    let text = text.trim();
    let bad = || Error::Config(format!("invalid {axis} value `{text}`"));
    match axis {
        SweepAxis::Threshold => {
            let v: f64 = text.parse().map_err(|_| bad())?;
            if !(0.0..=1.0).contains(&v) {
                return Err(bad());
            }
            Ok(SweepValue::Threshold(v))
        }
        SweepAxis::Capacity if text == "unlimited" => Ok(SweepValue::Capacity(None)),
        SweepAxis::Capacity => match text.parse::<usize>() {
            Ok(c) if c >= 1 => Ok(SweepValue::Capacity(Some(c))),
            _ => Err(bad()),
        },
        SweepAxis::Interval => match text.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(SweepValue::Interval(n)),
            _ => Err(bad()),
        },
    }
}

/// Parses a comma-separated value list.
pub fn parse_values(axis: SweepAxis, list: &str) -> Result<Vec<SweepValue>> {
    let values: Vec<SweepValue> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_value(axis, s))
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    Ok(values)
}

/// Applies one axis value to a copy of `base`.
pub fn apply(base: &RunConfig, value: SweepValue) -> RunConfig {
    use crate::membank::EvictionMode;
    let mut config = base.clone();
    match value {
        SweepValue::Threshold(s) => config.policy.sigma = s,
        SweepValue::Capacity(Some(c)) => {
            config.policy.capacity = c;
            if config.policy.eviction == EvictionMode::Unlimited {
                config.policy.eviction = EvictionMode::Dynamic;
            }
        }
        SweepValue::Capacity(None) => config.policy.eviction = EvictionMode::Unlimited,
        SweepValue::Interval(n) => config.policy.interval = n,
    }
    config
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: SweepValue,
    pub seeds: usize,
    pub mean_j: f64,
    pub mean_f: f64,
    pub mean_jf: f64,
    /// Mean bank size over the last frame of each seed.
    pub final_occupancy: f64,
}

/// Runs every value over every seed of `base` and averages per value.
pub fn sweep(base: &RunConfig, values: &[SweepValue]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if base.seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let config = apply(base, value);
        config.validate()?;
        let (mut j, mut f, mut occ) = (0.0, 0.0, 0.0);
        for &seed in &config.seeds {
            let result = run_seed(&config, seed)?;
            j += result.mean_j;
            f += result.mean_f;
            occ += result.frames.last().map_or(0, |r| r.bank_size) as f64;
        }
        let n = config.seeds.len() as f64;
        let (mean_j, mean_f) = (j / n, f / n);
        rows.push(SweepRow {
            value,
            seeds: config.seeds.len(),
            mean_j,
            mean_f,
            mean_jf: (mean_j + mean_f) / 2.0,
            final_occupancy: occ / n,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_names() {
        assert_eq!("capacity".parse::<SweepAxis>().unwrap(), SweepAxis::Capacity);
        assert!(matches!("speed".parse::<SweepAxis>(), Err(Error::Config(_))));
    }

    #[test]
    fn value_parsing() {
        let v = parse_values(SweepAxis::Capacity, "5,15, unlimited").unwrap();
        assert_eq!(
            v,
            vec![
                SweepValue::Capacity(Some(5)),
                SweepValue::Capacity(Some(15)),
                SweepValue::Capacity(None)
            ]
        );
        assert!(parse_values(SweepAxis::Interval, "").is_err());
        assert!(parse_values(SweepAxis::Interval, "0").is_err());
        assert!(parse_values(SweepAxis::Threshold, "1.5").is_err());
        assert_eq!(SweepValue::Capacity(None).to_string(), "unlimited");
    }
}
