//! Quality-aware dynamic memory for mask-propagation video object
//! segmentation.
//!
//! The crate decides which frames enter a bounded memory bank
//! ([`membank`]), how their quality is measured ([`quality`]) and how the
//! bank is queried ([`readout`]). The [`sim`] module drives the engine on
//! deterministic synthetic videos and scores it with region and boundary
//! metrics.

pub mod error;
pub mod grid;
pub mod membank;
pub mod quality;
pub mod readout;
pub mod sim;

pub use error::{Error, Result};
pub use grid::{dot_similarity, row_normalize, FeatureGrid, LabeledMaskSet, Matrix, NormMode, ObjectMask};
pub use membank::{Admission, BankPolicy, EvictionMode, MemoryBank, MemoryEntry, ReferenceScore};
pub use quality::{QualityReport, QualityScorer};
pub use readout::{memory_read, prior_enhance, PriorGate, PriorMode, ReadConfig, ReadOutput};
