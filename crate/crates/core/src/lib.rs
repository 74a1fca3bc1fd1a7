//! Galerkin boundary elements for the Laplace equation with boundary
//! conditions imposed weakly through Nitsche-type penalty terms added to the
//! Calderón multitrace operator.

pub mod analysis;
pub mod error;
pub mod formulations;
pub mod mesh;
pub mod operators;
pub mod quadrature;
pub mod solver;
pub mod spaces;
pub mod study;
pub mod verify;

pub use error::{BemError, Result};
pub use mesh::{Region, RegionRule, SphereFamily, TriangleSurfaceMesh};
pub use spaces::{Coefficients, FunctionSpace, SpaceFamily};
