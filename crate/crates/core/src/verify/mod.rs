//! Numerical certification harness: evolution-equation residuals measured on
//! recorded trajectories, the seven-term curvature coupling tensor and its
//! trace identity, maximum-principle monitors, convexity thresholds, and the
//! extinction-time bound.

mod calr;
mod monitors;
mod residual;
mod suite;

pub use calr::{calr_eval, calr_trace_check, CalRInputs};
pub use monitors::{
    convexity_monitor, extinction_bound_check, lift_consistency_check, max_principle_monitor,
    quotient_convexity_monitor, scalar_max_principle, ExtinctionCheck, MonitorSeries, NullSign,
    Reaction, TensorChoice,
};
pub use residual::{evolution_residual, EquationId, ResidualReport, ResidualRun};
pub use suite::{standard_residual_suite, SuiteOutcome};
