use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("degenerate training data: {0}")]
    DegenerateTraining(String),

    #[error("taxonomy error: unknown feature id `{0}`")]
    UnknownFeature(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("model kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },

    #[error("render error: {0}")]
    Render(String),

    #[error("leakage error: demonstration dialogue `{0}` is the dialogue under evaluation")]
    Leakage(String),

    #[error("gateway error after {} attempt(s): {}", attempts.len(), attempts.join("; "))]
    Gateway { attempts: Vec<String> },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Configuration and I/O failures, as opposed to domain or validation failures.
    pub fn is_config_or_io(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Io { .. } | Error::Gateway { .. }
        )
    }
}
