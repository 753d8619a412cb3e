use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("mesh invariant violated at {entity} {index}: {msg}")]
    MeshInvariant {
        entity: &'static str,
        index: usize,
        msg: String,
    },

    #[error("inverted element {triangle} (signed area {area:e})")]
    InvertedElement { triangle: usize, area: f64 },

    #[error("degenerate {entity} {index}")]
    Degenerate { entity: &'static str, index: usize },

    #[error("mesh has no obstacle boundary")]
    NoObstacle,

    #[error("unsupported quadrature order {0} (supported: 1, 2, 4)")]
    UnsupportedQuadrature(usize),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("conflicting Dirichlet values for dof {dof}: {first} vs {second}")]
    ConflictingConstraint { dof: usize, first: f64, second: f64 },

    #[error("{solver} did not converge in {iterations} iterations (residual {residual:e})")]
    Divergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("singular linear system in {0}")]
    Singular(String),

    #[error("invalid parameter {name}: {msg}")]
    InvalidParameter { name: &'static str, msg: String },

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(name: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            msg: msg.into(),
        }
    }

    /// True for failures of an iterative or direct solver, as opposed to bad
    /// input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::Singular(_))
    }
}
