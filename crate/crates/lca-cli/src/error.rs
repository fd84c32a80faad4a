//! CLI error type mapping every failure onto the documented exit codes:
//! 2 for configuration and usage problems, 1 for anything that went
//! wrong while computing.

use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, bad config file, malformed schema strings.
    #[error("{0}")]
    Usage(String),

    /// Data or numeric failure reported by the model library.
    #[error(transparent)]
    Model(#[from] lca_core::Error),

    /// File-level failure with the path that caused it.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    /// Malformed input data (CSV cells, report JSON).
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            _ => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Model(_) => "model",
            Self::Io { .. } => "io",
            Self::Data(_) => "data",
        }
    }

    /// The machine-readable error object printed on failure.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": {
                "kind": self.kind(),
                "message": self.to_string(),
            }
        })
        .to_string()
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
