//! Crate-wide error type.
//!
//! Every failure carries enough context to be shown to a user as-is. The
//! CLI maps variants onto three exit codes: usage errors (1), data errors
//! (2), and numerical failures (3).

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A tag that is empty, or becomes empty once normalized.
    #[error("degenerate tag {raw:?}: normalizes to nothing")]
    DegenerateTag { raw: String },

    #[error("tag system {0:?} was already ingested")]
    DuplicateSystem(String),

    #[error("duplicate item id {0:?}")]
    DuplicateItem(String),

    #[error("unknown graph node: {0}")]
    UnknownNode(String),

    #[error("word {0:?} is not part of the graph")]
    UnknownWord(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Invalid flags, options, or parameter values chosen by the caller.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code the CLI uses for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Numerical(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn parse(path: &str, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
