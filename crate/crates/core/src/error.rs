use thiserror::Error;

/// Errors raised by the solver and its building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix Q is not symmetric (max asymmetry {asymmetry:e} exceeds {tolerance:e})")]
    NonSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("constraint {row} has a zero normal and negative right-hand side {rhs}")]
    ZeroRowInfeasible { row: usize, rhs: f64 },

    #[error("non-finite value in problem data")]
    NonFinite,

    #[error("eigenvalue decomposition did not converge")]
    EigenFailure,

    #[error("secular function evaluated within {distance:e} of a pole")]
    PoleProximity { distance: f64 },

    #[error("facet normal is zero")]
    ZeroNormal,

    #[error("lift direction is zero")]
    ZeroDirection,

    #[error("quadratic form is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotConvex(f64),

    #[error("feasible set is empty")]
    Infeasible,

    #[error("objective is unbounded below on the feasible set")]
    Unbounded,

    #[error("invalid option: {0}")]
    BadOption(String),

    #[error("{what}: {count} cases exceed the budget of {limit}")]
    BudgetExceeded {
        what: &'static str,
        count: u128,
        limit: u128,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
