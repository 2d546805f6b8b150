//! Boundary element solver for the 2D Laplace equation with guaranteed
//! a posteriori bounds for the potential error.
//!
//! The potential `u_h` induced by a boundary element density is compared with
//! the exact potential through auxiliary finite element problems on a thin
//! layer of triangles along the boundary: a discrete harmonic extension of the
//! projected boundary residual bounds the error from above, a divergence-free
//! flux bounds it from below.

pub mod adaptive;
pub mod bem_kernels;
pub mod bem_solve;
pub mod boundary_trace;
pub mod error;
pub mod experiments;
pub mod fem_estimators;
pub mod mesh;
pub mod quadrature;
pub mod treecode;

pub use error::{BemError, Error, FemError, MeshError};
