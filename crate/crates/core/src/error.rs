// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("capacity error: {what} requires dimension >= {required}, got {got}")]
    Capacity {
        what: &'static str,
        required: usize,
        got: usize,
    },

    #[error("softmax support is empty: every position is masked out")]
    EmptySupport,

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("insufficient noise tokens: need {needed}, vocabulary has {available}")]
    InsufficientNoise { needed: usize, available: usize },

    #[error("sequence length {got} too short: minimum is {min}")]
    SequenceLength { min: usize, got: usize },

    #[error("unknown token id {token} for vocabulary of size {vocab}")]
    UnknownToken { token: usize, vocab: usize },

    #[error("hook payload shape mismatch: expected {expected_rows}x{expected_cols}, got {got_rows}x{got_cols}")]
    HookShape {
        expected_rows: usize,
        expected_cols: usize,
        got_rows: usize,
        got_cols: usize,
    },

    #[error("batch does not match vocabulary/model: {0}")]
    SpecMismatch(String),

    #[error("config validation failed: {0}")]
    Validation(String),

    #[error("i/o failure at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attach experiment/run context to an error.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input (configs, specs) rather than
    /// runtime failures. The CLI maps these to exit code 1, the rest to 2.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation(_) | Error::InvalidSpec(_) | Error::Json(_) => true,
            Error::Context { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
