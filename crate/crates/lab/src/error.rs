use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: qtraj_core::Error,
    },

    #[error("run `{0}` not found")]
    NotFound(String),

    #[error("run `{id}` has no `{kind}` artifacts; available: {}", available.join(", "))]
    KindMismatch {
        id: String,
        kind: String,
        available: Vec<String>,
    },

    #[error("artifact {path} does not match its recorded digest")]
    Integrity { path: PathBuf },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed registry file {path}: {message}")]
    Registry { path: PathBuf, message: String },
}

impl LabError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for anything the user can fix in their input,
    /// 3 for numerical failures, 1 for I/O trouble.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } | Self::NotFound(_) | Self::KindMismatch { .. } => 2,
            Self::Numerical { .. } => 3,
            Self::Integrity { .. } | Self::Io { .. } | Self::Registry { .. } => 1,
        }
    }
}

/// Attaches module context to core errors.
pub trait Context<T> {
    fn context(self, what: &str) -> std::result::Result<T, LabError>;
}

impl<T> Context<T> for qtraj_core::Result<T> {
    fn context(self, what: &str) -> std::result::Result<T, LabError> {
        self.map_err(|source| LabError::Numerical {
            context: what.to_string(),
            source,
        })
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
