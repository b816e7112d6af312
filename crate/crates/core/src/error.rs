use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{0}")]
    Consistency(String),

    #[error("{0}")]
    Usage(String),

    #[error("non-finite loss at step {step}")]
    NonFinite { step: usize },

    /// `line` is 1-based; 0 marks a problem with the file as a whole.
    #[error("{}", config_text(*line, message))]
    Config { line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint checksum mismatch")]
    Checksum,

    #[error("malformed checkpoint: {0}")]
    Format(String),
}

fn config_text(line: usize, message: &str) -> String {
    match line {
        0 => message.to_owned(),
        n => format!("line {n}: {message}"),
    }
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Dimension { op, left, right }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Consistency(_) => "consistency",
            Error::Usage(_) => "usage",
            Error::NonFinite { .. } => "numeric",
            Error::Config { .. } => "config",
            Error::Io { .. } => "io",
            Error::VersionMismatch { .. } => "version",
            Error::Checksum => "checksum",
            Error::Format(_) => "format",
        }
    }
}
