//! Exact solver for nonconvex quadratic minimisation over the unit ball
//! intersected with linear inequality constraints.

// comparisons written as `!(a > b)` deliberately send NaN down the failure path
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gen;
pub mod geometry;
mod linalg;
pub mod model;
pub mod oracle;
pub mod reduction;
pub mod sdpcheck;
pub mod trs0;

pub use error::{Error, Result};
pub use model::{
    objective_value, spectral_decompose, validate_instance, ProblemInstance, SolutionReport,
    SolverConfig, SpectralData, Status,
};
pub use nalgebra;
pub use reduction::{solve_extended, ReductionStats, Solver};
