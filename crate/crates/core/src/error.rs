//! Error type shared by all engine modules.
//!
//! Every variant carries a stable machine-readable code (see [`Error::code`])
//! so that front ends can emit `ERROR <code>: <message>` lines.

use thiserror::Error;

/// Engine-wide error type.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("point {point:?} is outside the chart domain (margin {margin})")]
    OutOfDomain { point: Vec<f64>, margin: f64 },

    #[error("metric is degenerate at {point:?} (condition number {cond:.3e})")]
    DegenerateMetric { point: Vec<f64>, cond: f64 },

    #[error("sample list is empty")]
    EmptySamples,

    #[error("spectrum partial sums fail the Cauchy/summability check: {0}")]
    NotSummable(String),

    #[error("cyclic group order must be >= 2, got {0}")]
    BadOrder(usize),

    #[error("point {point:?} does not belong to chart '{chart}'")]
    NotInChart { chart: String, point: Vec<f64> },

    #[error("initial lift is not invariant under the chart group (deviation {deviation:.3e})")]
    NotInvariant { deviation: f64 },

    #[error("curve came within {dist:.3e} of the singular set (margin {margin:.3e})")]
    SingularContact { dist: f64, margin: f64 },

    #[error("tangent space is vertical at node {node}: no horizontal complement")]
    VerticalTangency { node: usize },

    #[error("horizontal lift integration lost tolerance: {0}")]
    LiftDivergence(String),

    #[error("step rejected: {0}")]
    StepRejected(String),

    #[error("scenario invalid: {0}")]
    ScenarioInvalid(String),

    #[error("need at least {needed} consecutive snapshots, trajectory has {got}")]
    InsufficientSnapshots { needed: usize, got: usize },

    #[error("equation '{equation}' is not applicable to this scenario: {reason}")]
    ModelMismatch { equation: String, reason: String },

    #[error("field shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("frame dimensions are inconsistent: {0}")]
    FrameMismatch(String),

    #[error("reaction term must be polynomial so its sign at zero can be checked")]
    ReactionSignUnknown,

    #[error("trajectory did not stop by the extinction proxy (stop reason: {0})")]
    NotExtinct(String),

    #[error("trajectories are not aligned on a common time grid: {0}")]
    TimeGridMismatch(String),

    #[error("degenerate node {node}: repeated or coincident points")]
    DegenerateNode { node: usize },

    #[error("curvature requested at a pole row of a radial graph")]
    PoleSingularity,

    #[error("operation not supported for this immersion kind: {0}")]
    UnsupportedKind(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable code for this error.
    pub fn code(&self) -> &'static str {
        match self {
            Error::OutOfDomain { .. } => "out-of-domain",
            Error::DegenerateMetric { .. } => "degenerate-metric",
            Error::EmptySamples => "empty-samples",
            Error::NotSummable(_) => "not-summable",
            Error::BadOrder(_) => "bad-order",
            Error::NotInChart { .. } => "not-in-chart",
            Error::NotInvariant { .. } => "not-invariant",
            Error::SingularContact { .. } => "singular-contact",
            Error::VerticalTangency { .. } => "vertical-tangency",
            Error::LiftDivergence(_) => "lift-divergence",
            Error::StepRejected(_) => "step-rejected",
            Error::ScenarioInvalid(_) => "scenario-invalid",
            Error::InsufficientSnapshots { .. } => "insufficient-snapshots",
            Error::ModelMismatch { .. } => "model-mismatch",
            Error::ShapeMismatch { .. } => "shape-mismatch",
            Error::FrameMismatch(_) => "frame-mismatch",
            Error::ReactionSignUnknown => "reaction-sign-unknown",
            Error::NotExtinct(_) => "not-extinct",
            Error::TimeGridMismatch(_) => "time-grid-mismatch",
            Error::DegenerateNode { .. } => "degenerate-node",
            Error::PoleSingularity => "pole-singularity",
            Error::UnsupportedKind(_) => "unsupported-kind",
            Error::Io(_) => "io",
        }
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
