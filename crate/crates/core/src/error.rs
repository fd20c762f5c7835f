use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid mesh: {0}")]
    MeshValidation(String),

    #[error("size mismatch for {what}: expected {expected}, got {got}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("Newton iteration did not converge after {iterations} iterations (last residual {last:.3e})")]
    NewtonDivergence {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("topological derivative sample failed at B = ({bx}, {by}): {source}")]
    Sample {
        bx: f64,
        by: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("table {path}: {msg}")]
    Table { path: String, msg: String },

    #[error("missing topological derivative table for pair {0}")]
    MissingTable(String),

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("{0}")]
    Invalid(String),

    #[error("io error on {path}: {source}")]
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

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
