use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by ingestion, training, evaluation and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("user {user} has interactions but no gender label")]
    MissingGender { user: String },

    #[error("user {user} has invalid gender value {value:?} (expected M or F)")]
    InvalidGender { user: String, value: String },

    #[error("duplicate interaction for user {user} and item {item}")]
    DuplicateInteraction { user: String, item: String },

    #[error("dataset is empty after filtering with minimum {min_interactions} interactions")]
    EmptyAfterFiltering { min_interactions: usize },

    #[error("user {user} has {count} interactions, need at least {required} to split")]
    TooFewInteractions { user: String, count: usize, required: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("no evaluated users in group {0}")]
    EmptyGroup(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("every grid point failed for model {model}")]
    AllGridPointsFailed { model: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
