//! Constrained unlearning solvers.
//!
//! The constrained problem minimizes the forget loss subject to
//! `L_rtn(theta) <= epsilon`. Its Lagrangian
//! `L(theta, lambda) = L_fgt(theta) + lambda * (L_rtn(theta) - epsilon)` is
//! handled by alternating one gradient step in `theta` with one projected
//! ascent step in `lambda`, after a warm-up phase at fixed `lambda0`.

mod config;
mod dual;
mod run;
mod trace;

pub use config::{
    Budget, DerivedBudget, DualSchedule, DualSignal, Optimizer, SolverConfig, SolverMode,
};
pub use dual::{
    budget_from_reference, dual_step, epsilon_from_alpha, lagrangian, lagrangian_value, DualState,
};
pub use run::{
    evaluate_pair, primal_step, resolve_epsilon, run_pdu, run_scalarized, RunFailure, RunOutcome,
    StepEval,
};
pub use trace::{format_significant, replay_lambdas, TraceRecord, TrainTrace, TRACE_HEADER};
