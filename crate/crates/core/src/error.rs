//! Error types shared across the toolkit.
//!
//! Every fallible operation returns [`Error`]. The variants map onto the
//! process exit codes used by the CLI: validation/parse/config problems are
//! caller errors (exit 1), transport problems are environment errors (exit 2),
//! and training divergence gets its own code (exit 3).

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An input violated a documented invariant or precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// A file could not be parsed; carries the offending location.
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// A dataset file declared a schema version this build does not read.
    #[error("unsupported schema_version {found} in {path} (expected {expected})")]
    SchemaVersion {
        path: String,
        found: u64,
        expected: u64,
    },

    /// Reading or writing a file failed.
    #[error("persistence error on {path}: {source}")]
    Persistence {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A configuration file or client specification is unusable.
    #[error("configuration error: {0}")]
    Config(String),

    /// A client call failed after the retry budget was exhausted.
    #[error("transport error: {0}")]
    Transport(String),

    /// The embedder failed for a specific question.
    #[error("embedding error for {id}: {message}")]
    Embedding { id: String, message: String },

    /// Every evolution attempt produced an invalid candidate.
    #[error("evolution rejected for {question_id} ({reason}); last candidate: {last_candidate:?}")]
    EvolutionRejected {
        question_id: String,
        reason: String,
        last_candidate: String,
    },

    /// The answer model never produced a parseable completion.
    #[error("generation error for {question_id}: {message}; last completion: {last_completion:?}")]
    Generation {
        question_id: String,
        message: String,
        last_completion: String,
    },

    /// The answer model judged a harmful seed safe; needs human review.
    #[error("flagged for review: {question_id}: {message}")]
    FlaggedForReview { question_id: String, message: String },

    /// A formatted example does not fit the model context.
    #[error(
        "context overflow: prompt {prompt_len} + target {target_len} tokens exceed context {context_len}"
    )]
    ContextOverflow {
        prompt_len: usize,
        target_len: usize,
        context_len: usize,
    },

    /// Training produced a non-finite loss.
    #[error("divergence at step {step}: loss is not finite")]
    Divergence { step: usize },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn transport(msg: impl Into<String>) -> Self {
        Error::Transport(msg.into())
    }

    pub fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn persistence(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Persistence {
            path: path.into(),
            source,
        }
    }
}
