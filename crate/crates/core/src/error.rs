use thiserror::Error;

use crate::qn::IterationTrace;
use crate::table::Policy;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("transition row (state {state}, action {action}) sums to {sum}, expected 1")]
    RowSum {
        state: usize,
        action: usize,
        sum: f64,
    },

    #[error("discount {0} is outside the open interval (0, 1)")]
    DiscountRange(f64),

    #[error("negative transition probability {value} at (state {state}, action {action}, target {target})")]
    NegativeProbability {
        state: usize,
        action: usize,
        target: usize,
        value: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{what}: argument {value} outside the domain")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("iterative solve failed after {steps} steps, best relative residual {residual:e}")]
    IterativeSolveFailure { steps: usize, residual: f64 },

    #[error("tangent row {state} sums to {sum:e}, expected 0")]
    Tangent { state: usize, sum: f64 },

    #[error("multiplier bisection stalled after {steps} steps with residual {residual:e}")]
    Convergence { steps: usize, residual: f64 },

    #[error("no convergence within {} iterations", trace.records.len())]
    MaxItersExceeded {
        trace: Box<IterationTrace>,
        policy: Box<Policy>,
    },

    #[error("Euler step at t = {t} still leaves the simplex after {halvings} halvings")]
    StepSize { t: f64, halvings: usize },

    #[error("only {measurable} measurable errors, at least 3 are needed")]
    InsufficientData { measurable: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid synthetic model spec: {0}")]
    Spec(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
