//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("missing class directory: {0}")]
    MissingClassDir(String),
    #[error("class directory contains no images: {0}")]
    EmptyClass(String),
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("bad magic in feature or checkpoint file: {0}")]
    BadMagic(String),
    #[error("empty image")]
    EmptyImage,
    #[error("invalid sigma: {0}")]
    InvalidSigma(f32),
    #[error("image too small: {0}")]
    ImageTooSmall(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("invalid decomposition levels: {0}")]
    InvalidLevels(usize),
    #[error("empty feature component: {0}")]
    EmptyComponent(&'static str),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("stale activation cache: {0}")]
    StaleCache(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("empty confusion matrix")]
    EmptyMatrix,
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code, emitted on the CLI error line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::CorruptFile(_) => "CorruptFile",
            Error::MissingClassDir(_) => "MissingClassDir",
            Error::EmptyClass(_) => "EmptyClass",
            Error::DegenerateSplit(_) => "DegenerateSplit",
            Error::IndexOutOfRange(_) => "IndexOutOfRange",
            Error::DimMismatch(_) => "DimMismatch",
            Error::BadMagic(_) => "BadMagic",
            Error::EmptyImage => "EmptyImage",
            Error::InvalidSigma(_) => "InvalidSigma",
            Error::ImageTooSmall(_) => "ImageTooSmall",
            Error::InvalidParam(_) => "InvalidParam",
            Error::InvalidLevels(_) => "InvalidLevels",
            Error::EmptyComponent(_) => "EmptyComponent",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::DegenerateBatch(_) => "DegenerateBatch",
            Error::StaleCache(_) => "StaleCache",
            Error::EmptyDataset => "EmptyDataset",
            Error::LengthMismatch(_) => "LengthMismatch",
            Error::EmptyMatrix => "EmptyMatrix",
            Error::MissingInput(_) => "MissingInput",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}
