use std::path::PathBuf;

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at {location} line {line}: {reason}")]
    MalformedRecord {
        location: String,
        line: usize,
        reason: String,
    },

    #[error("duplicate note_id {note_id:?}")]
    DuplicateNoteId { note_id: String },

    #[error("bad lexicon file {path} line {line}: {reason}")]
    LexiconFormat {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("featurizer config fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("need at least two distinct classes to weight, found {found}")]
    TooFewClasses { found: usize },

    #[error("class {class} has {count} members, fewer than k={k} folds")]
    ClassTooSmall {
        class: String,
        count: usize,
        k: usize,
    },

    #[error("label sequences have different lengths: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("patient {patient_id} has no gold label")]
    MissingGoldLabel { patient_id: String },

    #[error("bad model file: {0}")]
    ModelFormat(String),

    #[error("unsupported model kind for this operation: {0}")]
    UnsupportedModel(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code contract for the CLI: 1 = usage/config error, 2 = data error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) => 1,
            _ => 2,
        }
    }
}
