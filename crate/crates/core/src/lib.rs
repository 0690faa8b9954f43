//! Crank-Nicolson finite elements for the Schrodinger-Helmholtz and
//! Schrodinger-Poisson systems
//!
//! ```text
//! i u_t + lap u - phi u = f1,    alpha phi - beta^2 lap phi = |u|^2 + f2
//! ```
//!
//! on triangulated polygons with homogeneous Dirichlet conditions. The fully
//! implicit scheme conserves the discrete mass and energy; each step is
//! solved by Picard iteration on the potential.

// Index loops mirror the matrix formulas; `!(x > 0.0)` also rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod error;
pub mod fe_space;
pub mod harness;
pub mod linear_solver;
pub mod manufactured;
pub mod mesh;
pub mod projection;
pub mod scheme;

pub use error::{Error, Result};
