use thiserror::Error;

use crate::domain::{RecordEvent, RecordStatus};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("illegal transition: {event:?} from {from:?}")]
    IllegalTransition { from: RecordStatus, event: RecordEvent },

    #[error("invalid project configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("permission denied")]
    PermissionDenied,

    #[error("{0} not found")]
    NotFound(&'static str),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("degenerate training set")]
    DegenerateTrainingSet,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("fewer than 2 classes")]
    TooFewClasses,

    #[error("corpus exhausted")]
    CorpusExhausted,

    #[error("batch incomplete")]
    BatchIncomplete,

    #[error("no double-coded items")]
    NoDoubleCodedItems,

    #[error("ragged ratings")]
    RaggedRatings,

    #[error("model unavailable")]
    ModelUnavailable,

    #[error("missing Text column")]
    MissingTextColumn,

    #[error("unreadable encoding: {0}")]
    Encoding(String),

    #[error("archive error: {0}")]
    Archive(String),
}
