use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON at byte offset {offset}: {message}")]
    Json { offset: usize, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("instance {id}: {message}")]
    InvalidInstance { id: String, message: String },

    #[error("instance {id}: label {label:?} is not in the {dataset} schema")]
    UnknownLabel { id: String, label: String, dataset: String },

    #[error("duplicate instance id {id:?} within the {split} split")]
    DuplicateId { id: String, split: String },

    #[error("instance ids appear in more than one split: {}", ids.join(", "))]
    SplitOverlap { ids: Vec<String> },

    #[error("{dataset} should have {expected} relation labels, derived {found}")]
    LabelCount { dataset: String, expected: usize, found: usize },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("cannot derive a schema from an empty instance list")]
    Empty,

    #[error("SemEVAL has no held-out split for prompt data; the prompt split must be empty")]
    SemEvalPromptSplit,
}

impl IngestError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IngestError::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(id: impl Into<String>, message: impl Into<String>) -> Self {
        IngestError::InvalidInstance { id: id.into(), message: message.into() }
    }
}
