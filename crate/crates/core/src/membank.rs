//! Bounded memory bank with interval-triggered, quality-gated admission and
//! reference-score eviction.
//!
//! A frame is considered for storage every `interval` frames. If its
//! normalized quality is below `sigma` the trigger is carried over to the
//! following frames until one passes. When the bank is full, the
//! non-protected entry with the lowest reference score
//! (`quality + weight * exp(-decay * |t - k|)`) makes room for it.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::FeatureGrid;
use crate::quality::QualityReport;

pub const DEFAULT_SIGMA: f64 = 0.8;
pub const DEFAULT_INTERVAL: usize = 5;
pub const DEFAULT_CAPACITY: usize = 25;

/// One stored reference frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    pub frame_index: usize,
    pub key: FeatureGrid,
    pub value: FeatureGrid,
    pub normalized_quality: f64,
    pub protected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvictionMode {
    /// Evict the lowest reference score.
    #[default]
    Dynamic,
    /// Keep the annotated frame plus the most recent entries.
    FifoRecent,
    /// Never evict; capacity is ignored.
    Unlimited,
}

impl EvictionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvictionMode::Dynamic => "dynamic",
            EvictionMode::FifoRecent => "fifo_recent",
            EvictionMode::Unlimited => "unlimited",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankPolicy {
    pub capacity: usize,
    pub sigma: f64,
    pub interval: usize,
    pub eviction: EvictionMode,
    /// Exempt the annotated frame from eviction.
    pub protect_first: bool,
    /// Rate of the temporal consistency decay.
    pub decay: f64,
    /// Weight of the temporal consistency term in the reference score.
    pub consistency_weight: f64,
}

impl Default for BankPolicy {
    fn default() -> Self {
        Self {
            capacity: DEFAULT_CAPACITY,
            sigma: DEFAULT_SIGMA,
            interval: DEFAULT_INTERVAL,
            eviction: EvictionMode::Dynamic,
            protect_first: true,
            decay: 1.0,
            consistency_weight: 1.0,
        }
    }
}

impl BankPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(Error::Config("capacity must be at least 1".into()));
        }
        if self.interval == 0 {
            return Err(Error::Config("interval must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.sigma) {
            return Err(Error::Config(format!(
                "sigma must lie in [0, 1], got {}",
                self.sigma
            )));
        }
        if !(self.decay >= 0.0) || !self.decay.is_finite() {
            return Err(Error::Config(format!("decay must be >= 0, got {}", self.decay)));
        }
        if !self.consistency_weight.is_finite() {
            return Err(Error::Config("consistency weight must be finite".into()));
        }
        Ok(())
    }

    /// Capacity actually enforced by the eviction mode.
    pub fn effective_capacity(&self) -> usize {
        match self.eviction {
            EvictionMode::Unlimited => usize::MAX,
            _ => self.capacity,
        }
    }
}

/// `exp(-|t - k|)`: closeness of memory frame `k` to the current frame `t`.
pub fn temporal_score(k: usize, t: usize) -> Result<f64> {
    temporal_score_with_decay(k, t, 1.0)
}

pub fn temporal_score_with_decay(k: usize, t: usize, decay: f64) -> Result<f64> {
    if k > t {
        return Err(Error::Causality {
            memory: k,
            current: t,
        });
    }
    Ok((-decay * (t - k) as f64).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceScore {
    pub frame_index: usize,
    pub accuracy: f64,
    pub consistency: f64,
    pub total: f64,
}

/// Reference score with unit decay and unit weight.
pub fn reference_score(entry: &MemoryEntry, t: usize) -> Result<ReferenceScore> {
    reference_score_with(entry, t, 1.0, 1.0)
}

fn reference_score_with(
    entry: &MemoryEntry,
    t: usize,
    decay: f64,
    weight: f64,
) -> Result<ReferenceScore> {
    let consistency = temporal_score_with_decay(entry.frame_index, t, decay)?;
    Ok(ReferenceScore {
        frame_index: entry.frame_index,
        accuracy: entry.normalized_quality,
        consistency,
        total: entry.normalized_quality + weight * consistency,
    })
}

/// Outcome of offering a frame to the bank.
#[derive(Debug, Clone, PartialEq)]
pub enum Admission {
    /// Stored; `evicted` is the entry that made room, if any.
    Admitted { evicted: Option<MemoryEntry> },
    /// Storage was due but the frame failed the quality gate; the trigger
    /// carries over to the next frame.
    Deferred,
    /// No storage trigger at this frame.
    NotDue,
    /// Storage was due and the frame passed, but every stored entry is
    /// protected. The trigger is consumed.
    Full,
}

impl Admission {
    pub fn admitted(&self) -> bool {
        matches!(self, Admission::Admitted { .. })
    }

    pub fn evicted_frame(&self) -> Option<usize> {
        match self {
            Admission::Admitted {
                evicted: Some(entry),
            } => Some(entry.frame_index),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MemoryBank {
    policy: BankPolicy,
    entries: Vec<MemoryEntry>,
    pending_trigger: bool,
}

impl MemoryBank {
    pub fn new(policy: BankPolicy) -> Result<Self> {
        policy.validate()?;
        Ok(Self {
            policy,
            entries: Vec::new(),
            pending_trigger: false,
        })
    }

    pub fn policy(&self) -> &BankPolicy {
        &self.policy
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pending_trigger(&self) -> bool {
        self.pending_trigger
    }

    pub fn contains(&self, frame_index: usize) -> bool {
        self.entries.iter().any(|e| e.frame_index == frame_index)
    }

    pub fn reference_score(&self, entry: &MemoryEntry, t: usize) -> Result<ReferenceScore> {
        reference_score_with(
            entry,
            t,
            self.policy.decay,
            self.policy.consistency_weight,
        )
    }

    /// Offers frame `t` to the bank.
    pub fn consider_admission(
        &mut self,
        report: &QualityReport,
        key: FeatureGrid,
        value: FeatureGrid,
        t: usize,
    ) -> Result<Admission> {
        if let Some(last) = self.entries.last() {
            if t <= last.frame_index {
                return Err(Error::Ordering {
                    frame: t,
                    last: last.frame_index,
                });
            }
        }
        if key.height() != value.height() || key.width() != value.width() {
            return Err(Error::Dimension(format!(
                "memory key {}x{} and value {}x{} differ in size",
                key.height(),
                key.width(),
                value.height(),
                value.width()
            )));
        }
        let quality = report.normalized_score;
        if t == 0 {
            self.entries.push(MemoryEntry {
                frame_index: 0,
                key,
                value,
                normalized_quality: quality,
                protected: self.policy.protect_first,
            });
            return Ok(Admission::Admitted { evicted: None });
        }

        let due = t % self.policy.interval == 0 || self.pending_trigger;
        if !due {
            return Ok(Admission::NotDue);
        }
        if quality < self.policy.sigma {
            self.pending_trigger = true;
            return Ok(Admission::Deferred);
        }
        self.pending_trigger = false;

        let mut evicted = None;
        if self.entries.len() >= self.policy.effective_capacity() {
            let out = match self.policy.eviction {
                EvictionMode::Dynamic => self.evict_lowest(t),
                EvictionMode::FifoRecent => self.evict_oldest(),
                EvictionMode::Unlimited => unreachable!("unbounded bank is never full"),
            };
            match out {
                Ok(entry) => evicted = Some(entry),
                Err(Error::NoEvictable) => return Ok(Admission::Full),
                Err(e) => return Err(e),
            }
        }
        self.entries.push(MemoryEntry {
            frame_index: t,
            key,
            value,
            normalized_quality: quality,
            protected: false,
        });
        Ok(Admission::Admitted { evicted })
    }

    /// Removes the non-protected entry with the smallest reference score at
    /// frame `t`; ties go to the older entry.
    pub fn evict_lowest(&mut self, t: usize) -> Result<MemoryEntry> {
        let mut victim: Option<(usize, f64)> = None;
        for (pos, entry) in self.entries.iter().enumerate() {
            if entry.protected {
                continue;
            }
            let total = self.reference_score(entry, t)?.total;
            if victim.map_or(true, |(_, best)| total < best) {
                victim = Some((pos, total));
            }
        }
        let (pos, _) = victim.ok_or(Error::NoEvictable)?;
        Ok(self.entries.remove(pos))
    }

    /// Removes the oldest non-protected entry.
    pub fn evict_oldest(&mut self) -> Result<MemoryEntry> {
        let pos = self
            .entries
            .iter()
            .position(|e| !e.protected)
            .ok_or(Error::NoEvictable)?;
        Ok(self.entries.remove(pos))
    }

    /// Stacks every entry's key and value grids along the location axis,
    /// oldest entry first.
    pub fn snapshot_keys_values(&self) -> Result<(FeatureGrid, FeatureGrid)> {
        if self.entries.is_empty() {
            return Err(Error::EmptyMemory);
        }
        let keys: Vec<&FeatureGrid> = self.entries.iter().map(|e| &e.key).collect();
        let values: Vec<&FeatureGrid> = self.entries.iter().map(|e| &e.value).collect();
        Ok((FeatureGrid::stack_rows(&keys)?, FeatureGrid::stack_rows(&values)?))
    }

    /// Deterministic text rendering of the bank state.
    pub fn state_text(&self) -> String {
        let p = &self.policy;
        let mut out = format!(
            "bank capacity={} sigma={} interval={} eviction={} pending={} entries={}\n",
            p.capacity,
            p.sigma,
            p.interval,
            p.eviction.as_str(),
            self.pending_trigger,
            self.entries.len()
        );
        for e in &self.entries {
            let _ = writeln!(
                out,
                "entry k={} q={:.9} protected={} key={} value={}",
                e.frame_index,
                e.normalized_quality,
                e.protected,
                grid_digest(&e.key),
                grid_digest(&e.value)
            );
        }
        out
    }
}

/// Short SHA-256 digest of a grid's shape and contents.
pub fn grid_digest(grid: &FeatureGrid) -> String {
    let mut hasher = Sha256::new();
    for dim in [grid.height(), grid.width(), grid.channels()] {
        hasher.update((dim as u64).to_le_bytes());
    }
    for v in grid.data() {
        hasher.update(v.to_le_bytes());
    }
    hex::encode(&hasher.finalize()[..8])
}
