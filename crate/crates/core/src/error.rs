use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty batch")]
    EmptyBatch,

    #[error("choice index {index} out of range for instance with {choices} choices")]
    ChoiceIndex { index: usize, choices: usize },

    #[error("shape mismatch: expected {expected} values, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("instance {id} has {choices} choices, adversary head supports at most {max}")]
    TooManyChoices { id: String, choices: usize, max: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid dataset `{name}`: {message}")]
    Validation { name: String, message: String },

    #[error("dataset too small: need at least {needed} instances, have {have}")]
    TooSmall { needed: usize, have: usize },

    #[error("insufficient {pool} pool: requested {requested}, available {available} (short by {})", requested - available)]
    Shortfall {
        pool: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("meta-test set overlaps the training set on {count} ids (first: {first})")]
    Overlap { count: usize, first: String },

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("checkpoint version mismatch: file has `{found}`, expected `{expected}`")]
    Version { found: String, expected: String },

    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),

    #[error("training diverged at step {step}: non-finite loss")]
    Diverged {
        step: usize,
        last_finite: Box<crate::train::Checkpoint>,
    },

    #[error("unknown report format `{0}`")]
    UnknownFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
