//! Optimally transported mesh generation on the doubly periodic plane and on
//! the sphere.
//!
//! A fixed computational mesh is moved by the gradient (plane) or exponential
//! map (sphere) of a cell-centred potential that solves a Monge–Ampère type
//! equation, so cell areas follow a prescribed monitor function while the
//! connectivity never changes. Every numeric kernel is generic over
//! [`scalar::Real`]; the aliases below fix the scalar to `f64`.

pub mod base;
pub mod cases;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod monitor;
pub mod operators;
pub mod scalar;
pub mod solver;
pub mod sphere;
pub mod vector;
pub mod voronoi;

pub use error::{Error, Result};

pub type Vector = vector::Vec3<f64>;
pub type Mesh = mesh::PolygonalSurfaceMesh<f64>;
pub type Transported = mesh::TransportedMesh<f64>;
pub type CellField = mesh::CellScalarField<f64>;
pub type VertexField = mesh::VertexVectorField<f64>;
pub type Solver<'a> = solver::MaSolver<'a, f64>;
pub type State = solver::SolverState<f64>;
pub type Report = solver::RunReport<f64>;
pub type QualityReport = diagnostics::MeshQualityReport<f64>;
pub type Voronoi = voronoi::VoronoiResult<f64>;
