use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("descriptor dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("descriptor norm {norm} deviates from 1 by more than {tolerance}")]
    NotUnitNorm { norm: f64, tolerance: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("input set is empty")]
    EmptyInput,
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("solution already holds the maximum of {0} members")]
    SolutionFull(usize),
    #[error("element {0} is already a member of the solution")]
    DuplicateMember(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("instance too large for exhaustive search ({0} subsets)")]
    TooLarge(u128),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("bad magic bytes in session file")]
    BadMagic,
    #[error("session file is truncated")]
    Truncated,
    #[error("unsupported session format version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("missing payload file {0}")]
    MissingPayload(PathBuf),
    #[error("config error: {0}")]
    Config(String),
    #[error("preload worker failed: {0}")]
    Worker(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
