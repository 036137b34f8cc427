use thiserror::Error;

use crate::ode::Solution;
use crate::solvers::RunTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric: max |A - A^T| = {asymmetry:e}")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is indefinite: smallest eigenvalue {min_eigenvalue:e}")]
    Indefinite { min_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("nonsmooth term is +inf at the comparison point; inequality is vacuous")]
    InfiniteValue,

    #[error("missing reference minimizer / optimal value")]
    MissingReference,

    #[error("scheme {scheme} does not accept this problem: {reason}")]
    SchemeMismatch { scheme: String, reason: String },

    #[error("inner solve did not converge after {iterations} iterations (residual {residual:e})")]
    InnerSolve { iterations: usize, residual: f64 },

    #[error("x-update violates f(x_{{k+1}}) <= f(y_k) - |grad f(y_k)|^2/(2L): lhs {lhs:e} > rhs {rhs:e}")]
    DescentViolated { lhs: f64, rhs: f64 },

    #[error("run diverged at k = {k}: gap {gap:e} exceeds {factor:e} x initial gap")]
    Diverged {
        k: usize,
        gap: f64,
        factor: f64,
        trace: Box<RunTrace>,
    },

    #[error("integrator step size underflow at t = {t:e} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64, partial: Box<Solution> },

    #[error("{scheme} has no proved rate envelope")]
    NoEnvelope { scheme: String },

    #[error("config line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },

    #[error("config: {message}")]
    Config { message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
