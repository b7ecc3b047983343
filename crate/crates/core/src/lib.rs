//! Numerical Dirichlet solver for p-convex graphs of prescribed curvature,
//! together with the symmetric-function operator calculus it is built on.

pub mod eigen;
pub mod error;
pub mod fexpr;
pub mod geometry;
pub mod grid;
pub mod solver;
pub mod sparse;
pub mod symfunc;
pub mod verify;

pub use error::{Error, Result};
