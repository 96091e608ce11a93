//! Numerical toolkit for almost complex structures on spheres and conformal
//! surfaces: covariant derivatives, Nijenhuis tensors, the tangent algebra
//! split, Grassmannian pullbacks, and the obstruction verifier behind the
//! `acs` command-line tool.

pub mod chart;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod grassmann;
pub mod linalg;
pub mod obstruction;
pub mod poly;
pub mod sphere;
pub mod tensor;

pub use error::{Error, Result};
