use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch for {what}: expected {expected}, got {actual}")]
    Shape {
        what: String,
        expected: String,
        actual: String,
    },
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("label code has length {actual}, model expects N = {expected}")]
    LabelLength { expected: usize, actual: usize },
    #[error("label index {index} out of range for {count} labels")]
    LabelIndex { index: usize, count: usize },
    #[error("unknown label {label:?}; vocabulary is [{vocabulary}]")]
    UnknownLabel { label: String, vocabulary: String },
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error("image {path}: {msg}")]
    ImageFile { path: PathBuf, msg: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint tensor {name:?}: {msg}")]
    CheckpointTensor { name: String, msg: String },
    #[error("non-finite loss component {component} at iteration {iteration}")]
    NonFinite {
        component: &'static str,
        iteration: u64,
    },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(what: &str, expected: impl ToString, actual: impl ToString) -> Error {
    Error::Shape {
        what: what.to_string(),
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
