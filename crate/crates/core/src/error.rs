use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across scenario handling, ray tracing, the forward model and the solver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {what}: {source}")]
    Parse {
        what: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("link {link}: {reason}")]
    UnusableLink { link: usize, reason: String },

    #[error("total linear gain {total:e} is below the floor")]
    GainFloor { total: f64 },

    #[error("permittivity {eps} is below 1 (vacuum)")]
    Domain { eps: f64 },

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("solver aborted at iteration {iteration}: {reason}")]
    Solver { iteration: usize, reason: String },

    #[error("grid too large: {nodes} nodes exceeds limit {limit}")]
    GridTooLarge { nodes: u128, limit: u128 },

    #[error("quadrature did not converge on [{lo}, {hi}]")]
    Quadrature { lo: f64, hi: f64 },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
