//! Crate-wide error type.
//!
//! Variants are grouped by failure class; the CLI maps them onto distinct
//! process exit codes (config / runtime / I/O).

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two parameter sets do not share the same layer layout.
    #[error("architecture mismatch: {0}")]
    ArchMismatch(String),

    /// Malformed container contents (lengths, headers, layouts).
    #[error("structural error: {0}")]
    Structure(String),

    /// NaN or other non-finite value where a finite number is required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Invalid configuration. The message lists every violated field.
    #[error("config error: {0}")]
    Config(String),

    /// Local training diverged.
    #[error("training error at round {round}, client {client}: {msg}")]
    Training { round: u32, client: usize, msg: String },

    /// A persisted round log failed checksum, version, or completeness checks.
    #[error("corrupt log: {0}")]
    CorruptLog(String),

    /// The request exceeds a supported bound (e.g. exact Shapley client count).
    #[error("capability error: {0}")]
    Capability(String),

    /// A valuation window starting at round `t` has no future rounds.
    #[error("empty window: no rounds exist after t={t}")]
    EmptyWindow { t: u32 },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
