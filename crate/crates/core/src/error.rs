use std::io;

use thiserror::Error;

use crate::backends::BackendError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("trace format version {found} not supported (expected {expected})")]
    TraceVersion { found: u32, expected: u32 },

    #[error("digest mismatch: trace was built from scenario {trace}, got {scenario}")]
    DigestMismatch { trace: String, scenario: String },

    #[error("malformed trace record at step {step}: {reason}")]
    TraceRecord { step: u64, reason: String },

    #[error("truncated trace: expected {expected} step records, found {found}")]
    TraceTruncated { expected: u64, found: u64 },

    #[error("backend error at step {step}: {source}")]
    Backend {
        step: u64,
        #[source]
        source: BackendError,
    },

    #[error("tear-down left {} failures: {}", .0.len(), .0.join("; "))]
    TearDown(Vec<String>),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn budget(msg: impl Into<String>) -> Self {
        Error::Budget(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Backend { .. } | Error::TearDown(_) => 4,
            Error::Budget(_) => 5,
            _ => 2,
        }
    }

    /// Short machine-readable error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Budget(_) => "budget_exceeded",
            Error::Io { .. } => "io",
            Error::TraceVersion { .. } => "trace_version",
            Error::DigestMismatch { .. } => "digest_mismatch",
            Error::TraceRecord { .. } => "trace_record",
            Error::TraceTruncated { .. } => "trace_truncated",
            Error::Backend { .. } => "backend",
            Error::TearDown(_) => "tear_down",
            Error::Json(_) => "json",
        }
    }
}
