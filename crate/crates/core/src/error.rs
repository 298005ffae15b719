use thiserror::Error;

/// Errors raised by the memory engine and the simulation harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("mask value {value} at index {index} is outside [0, 1]")]
    MaskRange { index: usize, value: f64 },
    #[error("row {row} has non-positive similarity sum {sum}")]
    DegenerateRow { row: usize, sum: f64 },
    #[error("object lists are not aligned: {left} vs {right} objects")]
    Alignment { left: usize, right: usize },
    #[error("first-frame quality score must be positive, got {0}")]
    DegenerateAnchor(f64),
    #[error("memory frame {memory} lies after current frame {current}")]
    Causality { memory: usize, current: usize },
    #[error("frame {frame} is not after the last stored frame {last}")]
    Ordering { frame: usize, last: usize },
    #[error("no evictable entry: only protected frames are stored")]
    NoEvictable,
    #[error("memory bank is empty")]
    EmptyMemory,
    #[error("resolution {from_h}x{from_w} cannot be reduced to {to_h}x{to_w}")]
    Resolution {
        from_h: usize,
        from_w: usize,
        to_h: usize,
        to_w: usize,
    },
    #[error("decode error: {0}")]
    Decode(String),
    #[error("invalid video spec: {0}")]
    Spec(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("frame {frame}: {source}")]
    Frame { frame: usize, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;
