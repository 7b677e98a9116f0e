use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the ordering toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("bad {format} file: {message}")]
    Format {
        format: &'static str,
        message: String,
    },

    #[error("no documents survived ingestion")]
    EmptyCorpus,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("vector has zero norm")]
    ZeroNorm,

    #[error("training sample too small: got {got} rows, need at least {need}")]
    SampleTooSmall { got: usize, need: usize },

    #[error("index has not been trained")]
    Untrained,

    #[error("document id {0} added more than once")]
    DuplicateId(u32),

    #[error("document id {0} appears in more than one shard")]
    OverlappingShards(u32),

    #[error("unknown document id {0}")]
    UnknownId(u32),

    #[error("scores for edge {a}-{b} disagree: {forward} vs {backward}")]
    ScoreMismatch {
        a: u32,
        b: u32,
        forward: f32,
        backward: f32,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed on {}: {source}", artifact.display())]
    Stage {
        stage: &'static str,
        artifact: PathBuf,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    pub(crate) fn format(format: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            format,
            message: message.into(),
        }
    }
}
