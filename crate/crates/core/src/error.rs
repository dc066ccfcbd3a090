use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("class index {index} out of range for {classes} classes")]
    ClassIndex { index: usize, classes: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("model file parse error at layer {layer}: {message}")]
    ModelParse { layer: usize, message: String },

    #[error("model file error: {0}")]
    ModelFile(String),

    #[error("model validation failed at layer {layer}: {message}")]
    ModelValidation { layer: usize, message: String },

    #[error("network structure error: {0}")]
    Structure(String),

    #[error("data format error: {0}")]
    DataFormat(String),

    #[error("feature out of [0,1] at data row {row}, column {column}: {value}")]
    DataDomain {
        row: usize,
        column: String,
        value: f64,
    },

    #[error("label {label} out of range for {classes} classes at data row {row}")]
    DataLabel {
        row: usize,
        label: usize,
        classes: usize,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// CLI exit code: 2 for configuration problems, 3 for data/model-file
    /// problems, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::ClassIndex { .. } => 2,
            Error::DataFormat(_)
            | Error::DataDomain { .. }
            | Error::DataLabel { .. }
            | Error::EmptyDataset
            | Error::ModelParse { .. }
            | Error::ModelFile(_)
            | Error::ModelValidation { .. }
            | Error::Io(_)
            | Error::Json(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
