//! Mean curvature flow engine for hypersurfaces in Euclidean charts,
//! Riemannian orbifold quotients, and translation-group submersion models,
//! with a verification harness that measures evolution-equation residuals,
//! maximum-principle monitors, convexity thresholds, and the extinction-time
//! bound against analytic solutions.

pub mod chart;
pub mod error;
pub mod flow;
pub mod mesh;
pub mod orbifold;
pub mod spectrum;
pub mod submersion;
pub mod verify;

pub use chart::{CurvatureData, Christoffel, DerivMode, Domain, LEstimate, MetricChart};
pub use error::{Error, Result};
pub use flow::{FlowState, IntegratorParams, Scenario, Setting, Snapshot, StopReason, Trajectory};
pub use mesh::{
    fundamental_forms, laplace_beltrami, min_principal_curvature, resample, DiscreteImmersion,
    Field, GeometryCache, GraphGrid, ImmersionKind,
};
pub use orbifold::{make_cone_atlas, make_plane_atlas, Isometry, OrbifoldAtlas, OrbifoldChart};
pub use spectrum::{RegTrace, Spectrum};
pub use submersion::{SubmersionKind, SubmersionModel};
pub use verify::{EquationId, MonitorSeries, ResidualReport};
