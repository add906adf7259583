use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid label {label} at frame {frame} (expected 0, 1 or 2)")]
    Label { frame: usize, label: u8 },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    TrainingDiverged { epoch: usize },

    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no feasible path through the state space")]
    NoFeasiblePath,

    #[error("missing stem `{stem}` for song `{song}`")]
    MissingStem { song: String, stem: String },

    #[error("stem duration mismatch for song `{song}`: {detail}")]
    StemMismatch { song: String, detail: String },

    #[error("incomplete corpus: {0}")]
    IncompleteCorpus(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("cannot decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("invalid annotation {path}: {reason}")]
    Annotation { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyInput(_) => "EmptyInput",
            Error::Shape(_) => "ShapeError",
            Error::Label { .. } => "LabelError",
            Error::TrainingDiverged { .. } => "TrainingDiverged",
            Error::IncompatibleCheckpoint(_) => "IncompatibleCheckpoint",
            Error::Config(_) => "ConfigError",
            Error::NoFeasiblePath => "NoFeasiblePath",
            Error::MissingStem { .. } => "MissingStem",
            Error::StemMismatch { .. } => "StemMismatch",
            Error::IncompleteCorpus(_) => "IncompleteCorpus",
            Error::Input(_) => "InputError",
            Error::Decode { .. } => "DecodeError",
            Error::Annotation { .. } => "AnnotationError",
            Error::Io { .. } => "IoError",
            Error::Json(_) => "JsonError",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
