//! Checks and measurements over executions.

pub mod approx;
pub mod convergence;
pub mod hardness;
pub mod invariants;

use crate::sim::SimError;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("colors still change in the final round (no stabilization after t0 = {t0})")]
    NotStabilized { t0: u64 },
    #[error(transparent)]
    Sim(#[from] SimError),
}

pub use approx::{approximation_verdict, ApproxReport};
pub use convergence::{
    check_bound, count_unstable_rounds, detect_stabilization, Bound, ConvergenceReport,
};
pub use hardness::{hardness_demo, HardnessReport};
pub use invariants::{
    check_step_invariants, check_trace, trace_diagnostics, ttl_oracle, CheckContext, Rule,
    Severity, Violation,
};
