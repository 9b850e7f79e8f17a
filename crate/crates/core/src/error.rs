use thiserror::Error;

/// Errors produced by ingestion, graph construction, the model and training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },

    #[error("line {line}: feature length {found} does not match declared d={expected}")]
    FeatureLength {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: invalid bounding box ({x_min}, {y_min}, {x_max}, {y_max})")]
    InvalidBox {
        line: usize,
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },

    #[error("line {line}: {what} label {label} out of range (declared {count} classes)")]
    LabelOutOfRange {
        line: usize,
        what: &'static str,
        label: usize,
        count: usize,
    },

    #[error("line {line}: non-finite number `{token}`")]
    NonFinite { line: usize, token: String },

    #[error("dataset failed validation: {0}")]
    Invalid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("feature dimension mismatch: model expects d={expected}, data has d={actual}")]
    FeatureDim { expected: usize, actual: usize },

    #[error("mask row {0} has no admissible entry")]
    EmptyMaskRow(usize),

    #[error("non-finite value: {0}")]
    NumericNonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no training signal: {0}")]
    NoTrainingSignal(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("checkpoint: bad magic bytes")]
    BadMagic,

    #[error("checkpoint: format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint: checksum mismatch (file truncated or corrupted)")]
    Checksum,

    #[error("checkpoint: {0}")]
    CheckpointFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
