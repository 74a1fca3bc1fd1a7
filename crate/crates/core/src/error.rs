use thiserror::Error;

use crate::mesh::Region;

pub type Result<T, E = BemError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BemError {
    #[error("refinement level {level} exceeds the limit of {max}")]
    SizeLimit { level: usize, max: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("triangle {triangle} straddles the region plane; the mesh is not fitted")]
    UnfittedMesh { triangle: usize },

    #[error("function spaces live on different meshes")]
    MeshMismatch,

    #[error("unsupported {what}: {detail}")]
    Unsupported { what: &'static str, detail: String },

    #[error("non-finite value {value} at {location}")]
    NonFinite { value: f64, location: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("boundary labels incompatible with the formulation: {0}")]
    RegionMismatch(String),

    #[error("region {0:?} is empty")]
    EmptyRegion(Region),

    #[error(
        "Neumann data is not compatible: integral {integral:e} exceeds tolerance {tolerance:e}"
    )]
    IncompatibleData { integral: f64, tolerance: f64 },

    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error(
        "GMRES did not converge: relative residual {residual:e} after {iterations} iterations"
    )]
    NotConverged {
        iterations: usize,
        residual: f64,
        /// Iterate with the smallest residual seen.
        best: Box<nalgebra::DVector<f64>>,
    },

    #[error("singular matrix")]
    SingularMatrix,

    #[error("mass matrix factorisation failed")]
    SingularMass,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}
