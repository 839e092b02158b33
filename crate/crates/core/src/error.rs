use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("polygon needs at least 3 vertices, got {0}")]
    InvalidPolygon(usize),

    #[error("face {face} has zero length")]
    DegenerateFace { face: usize },

    #[error("cell {cell} has zero area")]
    ZeroAreaCell { cell: usize },

    #[error("least-squares normal matrix of cell {cell} is singular")]
    DegenerateCellGeometry { cell: usize },

    #[error("vertex {vertex} gradient stencil is degenerate (condition number {condition:.3e})")]
    DegenerateVertexStencil { vertex: usize, condition: f64 },

    #[error("operation `{0}` is not supported on this geometry")]
    UnsupportedGeometry(&'static str),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("field has {got} values but the mesh has {expected}")]
    FieldLength { expected: usize, got: usize },

    #[error("monitor is non-positive in cell {cell} (value {value:e})")]
    NonPositiveMonitor { cell: usize, value: f64 },

    #[error("invalid monitor: {0}")]
    InvalidMonitor(String),

    #[error("right-hand side is incompatible with the singular operator (mean {mean:e}, norm {norm:e})")]
    IncompatibleRhs { mean: f64, norm: f64 },

    #[error("linear solver did not reach residual {tolerance:e} in {iterations} iterations (last {residual:e})")]
    LinearSolveDiverged {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("generators {0} and {1} coincide")]
    DuplicateGenerators(usize, usize),

    #[error("convex hull construction failed: {0}")]
    Hull(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
