//! The standard residual suite: each evolution identity is checked on the
//! analytic scenario that exercises it, across three resolutions.
//!
//! Placements: flat-curve identities run on the shrinking circle (measurable
//! where the circle is not degenerate, exactly at the floor where it is),
//! gradient-bearing identities on a gentle ellipse, coupling-bearing
//! identities on a cylinder section in the translation model (the coupling
//! terms are assembled and exactly zero), the ||H|| identity on the sphere
//! graph, and the curvature-corrected quotient identity on a geodesic circle
//! in the round-sphere chart.

use crate::error::Result;
use crate::flow::{adaptive_dt, run_flow, FlowState, Scenario, Trajectory};
use crate::mesh::DiscreteImmersion;
use crate::submersion::SubmersionModel;
use crate::verify::residual::{evolution_residual, EquationId, ResidualReport, ResidualRun};

pub struct SuiteOutcome {
    pub reports: Vec<ResidualReport>,
    pub all_pass: bool,
}

/// Integrate a resample-free window of roughly `steps` adaptive steps with
/// snapshots at every accepted step.
pub fn residual_window(im: DiscreteImmersion, steps: usize) -> Result<Trajectory> {
    let mut sc = Scenario::new("residual-window", im);
    sc.params.resample_every = 0;
    sc.snapshot_cadence = 1;
    // short windows must not trip the extinction proxy at coarse resolutions
    sc.extinction_factor = 0.0;
    let state = FlowState::new(sc.initial.clone())?;
    let dt = adaptive_dt(&state, &sc.params);
    sc.params.t_max = dt * steps as f64 * 0.999;
    run_flow(&sc)
}

fn circle_runs(resolutions: &[usize], steps: usize) -> Result<Vec<(usize, Trajectory)>> {
    resolutions
        .iter()
        .map(|&n| Ok((n, residual_window(DiscreteImmersion::circle(1.0, n), steps)?)))
        .collect()
}

fn ellipse_runs(resolutions: &[usize], steps: usize) -> Result<Vec<(usize, Trajectory)>> {
    resolutions
        .iter()
        .map(|&n| Ok((n, residual_window(DiscreteImmersion::ellipse(1.5, 1.0, n), steps)?)))
        .collect()
}

fn cylinder_runs(
    model: &SubmersionModel,
    resolutions: &[usize],
    steps: usize,
) -> Result<Vec<(usize, Trajectory)>> {
    resolutions
        .iter()
        .map(|&n| {
            let im = crate::flow::lift_circle_section(model, 1.0, n, 0.3)?;
            Ok((n, residual_window(im, steps)?))
        })
        .collect()
}

fn sphere_runs(lat_resolutions: &[usize], steps: usize) -> Result<Vec<(usize, Trajectory)>> {
    lat_resolutions
        .iter()
        .map(|&n| {
            let im = DiscreteImmersion::sphere_graph(1.0, n, 2 * n)?;
            Ok((n, residual_window(im, steps)?))
        })
        .collect()
}

/// Geodesic circle θ = θ0 in the unit round-sphere chart.
pub fn geodesic_circle(theta0: f64, n: usize) -> Result<DiscreteImmersion> {
    let chart = crate::chart::MetricChart::sphere_surface(1.0);
    let nodes: Vec<f64> = (0..n)
        .flat_map(|i| [theta0, 2.0 * std::f64::consts::PI * i as f64 / n as f64])
        .collect();
    DiscreteImmersion::new_periodic_curve(chart, nodes)
}

fn geodesic_runs(resolutions: &[usize], steps: usize) -> Result<Vec<(usize, Trajectory)>> {
    resolutions
        .iter()
        .map(|&n| Ok((n, residual_window(geodesic_circle(1.0, n)?, steps)?)))
        .collect()
}

fn report_for(
    eq: EquationId,
    runs: &[(usize, Trajectory)],
    model: Option<&SubmersionModel>,
    tol: f64,
) -> Result<ResidualReport> {
    let refs: Vec<ResidualRun> = runs
        .iter()
        .map(|(n, t)| ResidualRun { resolution: *n, traj: t, model })
        .collect();
    evolution_residual(eq, &refs, tol)
}

/// Run the whole suite at the given tolerance (reference-resolution absolute
/// tolerance, scaled by each quantity's magnitude).
pub fn standard_residual_suite(tol: f64) -> Result<SuiteOutcome> {
    let steps = 24;
    let curve_res = [64usize, 128, 256];
    let sphere_res = [16usize, 32, 64];

    let model = SubmersionModel::translation(3, 1);
    let circles = circle_runs(&curve_res, steps)?;
    let ellipses = ellipse_runs(&curve_res, steps)?;
    let cylinders = cylinder_runs(&model, &curve_res, steps)?;
    let spheres = sphere_runs(&sphere_res, steps)?;
    let geodesics = geodesic_runs(&curve_res, steps)?;

    let reports = vec![
        report_for(EquationId::GEvol, &circles, None, tol)?,
        report_for(EquationId::XiEvol, &ellipses, None, tol)?,
        report_for(EquationId::HEvol, &cylinders, Some(&model), tol)?,
        report_for(EquationId::Simons, &ellipses, None, tol)?,
        report_for(EquationId::LaplacianSplit, &cylinders, Some(&model), tol)?,
        report_for(EquationId::NormHEvol, &spheres, None, tol)?,
        report_for(EquationId::TrA2Evol, &cylinders, Some(&model), tol)?,
        report_for(EquationId::TracelessEvol, &circles, None, tol)?,
        report_for(EquationId::QuotientHuisken, &geodesics, None, tol)?,
    ];
    let all_pass = reports.iter().all(|r| r.pass);
    Ok(SuiteOutcome { reports, all_pass })
}
