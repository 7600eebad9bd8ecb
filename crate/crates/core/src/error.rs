use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numerical assertion failed; this points at a bug rather than at a
    /// property of the model state.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("tolerance {tol:e} not reached within {max_steps} steps (last change {achieved:e})")]
    ToleranceUnachievable {
        tol: f64,
        achieved: f64,
        max_steps: usize,
    },

    #[error("hamiltonian drift {drift:e} exceeds {tol:e} at t = {t}")]
    HamiltonianDrift { drift: f64, tol: f64, t: f64 },

    #[error("arc entered the singular set at t = {t} (defect {defect:e})")]
    EnteredSingularSet { t: f64, defect: f64 },

    #[error("no start reached feasibility (best defect {best_defect:e}, best boundary violation {best_boundary:e})")]
    InfeasibleWithinBudget {
        best_defect: f64,
        best_boundary: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
