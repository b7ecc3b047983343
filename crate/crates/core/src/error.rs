use thiserror::Error;

use crate::fexpr::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("spectrum is not in the P_{p} cone (min p-sum {min_sum:e})")]
    NotInCone { p: usize, min_sum: f64 },

    #[error("operator value overflowed")]
    Overflow,

    #[error("symmetric eigen-solver did not converge after {sweeps} sweeps")]
    EigenFailure { sweeps: usize },

    #[error("growth hypothesis violated: {0}")]
    GrowthHypothesis(String),

    #[error("point is not admissible (node {node}, margin {margin:e})")]
    NotAdmissible { node: usize, margin: f64 },

    #[error("right-hand side violates the solvability hypotheses: {0}")]
    HypothesisViolated(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid has no interior nodes")]
    EmptyGrid,

    #[error("boundary bisection failed at node {node}")]
    Bisection { node: usize },

    #[error("line search failed at Newton iteration {iteration} (residual {residual:e})")]
    LineSearch { iteration: usize, residual: f64 },

    #[error("Newton iteration limit {limit} exceeded (residual {residual:e})")]
    MaxNewton { limit: usize, residual: f64 },

    #[error("linear solve failed (relative residual {rel_residual:e} after {iterations} iterations)")]
    LinearSolve { rel_residual: f64, iterations: usize },

    #[error("homotopy stalled at t = {last_t} after {halvings} consecutive step halvings")]
    Stall { last_t: f64, halvings: usize },

    #[error("shooting bracket not found: {0}")]
    ShootingBracket(String),

    #[error("radial profile left the cone at rho = {rho}")]
    ConeExit { rho: f64 },
}
