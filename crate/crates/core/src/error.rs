use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Error, Debug)]
pub enum Error {
    /// Malformed text input (VOL header, CSV, key/value config). `line` is 1-based.
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A documented precondition of the called operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Point set too close to collinear (or coincident) for a unique rigid fit.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("degenerate triangle: {0}")]
    DegenerateTriangle(String),

    #[error("insufficient markers: found {found}")]
    InsufficientMarkers { found: usize },

    /// No candidate triangle passed absolute-scale verification.
    #[error("no match: {0}")]
    NoMatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }

    /// Short machine-readable kind tag, used for CLI diagnostics and benchmark status fields.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Format { .. } => "format",
            Error::Truncated { .. } => "truncated",
            Error::Io { .. } => "io",
            Error::Precondition(_) => "precondition",
            Error::DegenerateGeometry(_) => "degenerate_geometry",
            Error::DegenerateTriangle(_) => "degenerate_triangle",
            Error::InsufficientMarkers { .. } => "insufficient_markers",
            Error::NoMatch(_) => "no_match",
            Error::Config(_) => "config",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
