//! Region optimal power flow: the body of the ADMM x- and z-updates.

mod flow;
pub mod nlp;
mod subproblem;

use thiserror::Error;

pub use flow::Admittance;
pub use subproblem::{
    max_mismatch, power_flow_mismatch, solve_local_subproblem, solve_uncoupled, solve_with_fixed_boundary,
    IpmOptionsSerde, LocalSolution, SolverOptions, SubproblemSpec, DEFAULT_COST_SCALE,
};

#[derive(Debug, Error, Clone)]
pub enum OpfError {
    #[error("subproblem diverged: {reason}")]
    Diverged { reason: String, best: Box<LocalSolution> },
    #[error("infeasible region: {0}")]
    Infeasible(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
