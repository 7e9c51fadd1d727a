use std::path::PathBuf;

use thiserror::Error;

use crate::graph::Trajectory;
use crate::trainlog::TrainLog;

#[derive(Debug, Error)]
pub enum LeoError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("linear system is rank deficient at column {column}; the graph gauge is not fixed")]
    Gauge { column: usize },

    #[error("solver diverged after {iterations} iterations (best energy {best_energy:.6e})")]
    Divergence {
        iterations: usize,
        best_energy: f64,
        best: Box<Trajectory>,
    },

    #[error("posterior was not converged; its linearization is stale")]
    StaleLinearization,

    #[error("sampler tuning failed: {0}")]
    Tuning(String),

    #[error("training aborted: {reason}")]
    TrainingAbort { reason: String, log: Box<TrainLog> },

    #[error("episodes not solvable at the initial parameters: {0:?}")]
    Unsolvable(Vec<usize>),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("degenerate simplex: {0}")]
    DegenerateSimplex(String),
}

impl LeoError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LeoError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = LeoError> = std::result::Result<T, E>;
