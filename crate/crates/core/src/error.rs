use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("lookup failed: {0}")]
    Lookup(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("cost evaluation failed: {0}")]
    Evaluation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("reference solver did not converge after {iterations} iterations (best max residual {best_residual:.3e})")]
    NonConvergence {
        iterations: usize,
        best_residual: f64,
        best: Box<crate::game::OracleSolution>,
    },

    #[error("state diverged at t = {time}: agent {agent} field `{field}` is not finite")]
    Divergence {
        time: f64,
        agent: usize,
        field: String,
        partial: Box<crate::sim::TrajectoryLog>,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
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
}
