use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigIssue;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("input side {side} is not divisible by {factor}")]
    ShapeError { side: usize, factor: usize },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("operation requires a {expected} network")]
    WrongKind { expected: &'static str },

    #[error("empty score batch")]
    EmptyBatch,

    #[error("bce target contains a non-binary value {0}")]
    NonBinaryTarget(f64),

    #[error("term {0} needs paired samples but the batch is unpaired")]
    MissingPairing(&'static str),

    #[error("invalid configuration: {}", format_issues(.0))]
    Config(Vec<ConfigIssue>),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("manifest has no entries")]
    EmptyManifest,

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("crop {crop} larger than image side {side}")]
    CropTooLarge { crop: usize, side: usize },

    #[error("batch size {batch} exceeds {available} available samples")]
    BatchTooLarge { batch: usize, available: usize },

    #[error("thresholds are only supported for lsgan, not {0}")]
    ThresholdUnsupported(&'static str),

    #[error("non-finite loss at step {step} in {term}")]
    NonFiniteLoss { step: u64, term: String },

    #[error("data stream produced no batch")]
    DataExhausted,

    #[error("need at least {needed} samples, got {got}")]
    BatchTooSmall { needed: usize, got: usize },

    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),

    #[error("covariance is not positive semidefinite (min eigenvalue {0})")]
    NonPsd(f64),

    #[error("window {window} too large for {side}x{side} grid")]
    WindowTooLarge { window: usize, side: usize },

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("checkpoint not found: {0}")]
    MissingCheckpoint(PathBuf),

    #[error("run record not found in {0}")]
    MissingRunRecord(PathBuf),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("image codec: {0}")]
    Image(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_issues(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
