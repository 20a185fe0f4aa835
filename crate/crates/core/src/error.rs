use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, TrackError>;

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid template: {0}")]
    InvalidTemplate(String),

    #[error("template graph is disconnected: nodes {orphaned:?} are unreachable from node 0")]
    DisconnectedGraph { orphaned: Vec<usize> },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("responsibility matrix is empty (no mass assigned to any node)")]
    EmptyResponsibilities,

    #[error("node {node} has conflicting correspondence targets")]
    ConflictingCorrespondence { node: usize },

    #[error("mesh parse error in {path}: {reason}")]
    MeshParse { path: PathBuf, reason: String },

    #[error("sequence error in {path}: {reason}")]
    Sequence { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl TrackError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        TrackError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TrackError::Io {
            path: path.into(),
            source,
        }
    }
}
