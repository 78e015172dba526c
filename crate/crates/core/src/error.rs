use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rest surface: {0}")]
    InvalidSurface(String),

    #[error("point {0} has fewer than 2 neighbors; widen the neighborhood radius or k")]
    NeighborhoodTooSmall(usize),

    #[error("neighborhood of point {0} is degenerate (projected coordinates are rank deficient)")]
    DegenerateNeighborhood(usize),

    #[error("operation requires a triangulated rest surface")]
    MissingTriangulation,

    #[error("moving least squares Gram matrix of neighborhood {0} is singular")]
    SingularGram(usize),

    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    #[error("projection did not converge after {iterations} outer iterations (residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid scene: {0}")]
    Validation(String),

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

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SolveFailure(_) | Error::MaxIterations { .. } => 2,
            _ => 1,
        }
    }
}
