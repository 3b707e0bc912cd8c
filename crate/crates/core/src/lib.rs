//! Numerical laboratory for the two-dimensional chemotaxis system with
//! singular sensitivity,
//!
//! ```text
//! u_t = Δu - χ ∇·((u/v) ∇v),   v_t = Δv - v + u,
//! ```
//!
//! on a rectangle with no-flux boundaries: the admissibility function and
//! its threshold, cell-centered fields and quadrature, the energy functional
//! and its identities, a mass-conservative IMEX solver, and checks of the
//! energy inequalities along simulated trajectories.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod admissibility;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod functionals;
pub mod linsolve;
pub mod quadrature;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
