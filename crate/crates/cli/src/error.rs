use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

/// Where a configuration value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    CommandLine,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Line(l) => write!(f, "line {l}"),
            Self::CommandLine => write!(f, "command line"),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{location}: {msg}")]
    Syntax { location: Location, msg: String },

    #[error("{location}: unknown key `{key}` in section [{section}]")]
    UnknownKey { key: String, section: String, location: Location },

    #[error("{location}: unknown section [{section}]")]
    UnknownSection { section: String, location: Location },

    #[error("{location}: duplicate key `{key}` in section [{section}]")]
    Duplicate { key: String, section: String, location: Location },

    #[error("{location}: invalid value for `{field}`: {msg}")]
    Field { field: String, location: Location, msg: String },

    #[error("missing required field `{field}` for {kind} experiments")]
    Missing { field: String, kind: String },

    #[error("{0}")]
    Experiment(String),

    #[error(transparent)]
    Core(#[from] hdgauss_core::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }
}
