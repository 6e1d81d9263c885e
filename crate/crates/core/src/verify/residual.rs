//! Evolution-equation residuals on recorded trajectories.
//!
//! The left-hand time derivative is a three-point difference of the tracked
//! quantity at matched material nodes across consecutive snapshots; the
//! right-hand side is assembled from the discrete surface operators at the
//! center snapshot.  Sampling skips any window containing a resample event,
//! since resampling breaks node identity.

use crate::chart::MetricChart;
use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::mesh::{
    curve_hess_scalar, curve_lap_scalar, curve_lap_sym2, d1_periodic,
    CurveCache, GeometryCache, ImmersionKind,
};
use crate::submersion::SubmersionModel;
use crate::verify::calr::{calr_eval, CalRInputs};

/// The certified evolution identities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EquationId {
    GEvol,
    XiEvol,
    HEvol,
    Simons,
    LaplacianSplit,
    NormHEvol,
    TrA2Evol,
    TracelessEvol,
    QuotientHuisken,
}

impl EquationId {
    pub const ALL: [EquationId; 9] = [
        EquationId::GEvol,
        EquationId::XiEvol,
        EquationId::HEvol,
        EquationId::Simons,
        EquationId::LaplacianSplit,
        EquationId::NormHEvol,
        EquationId::TrA2Evol,
        EquationId::TracelessEvol,
        EquationId::QuotientHuisken,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EquationId::GEvol => "g-evol",
            EquationId::XiEvol => "xi-evol",
            EquationId::HEvol => "h-evol",
            EquationId::Simons => "simons",
            EquationId::LaplacianSplit => "laplacian-split",
            EquationId::NormHEvol => "normH-evol",
            EquationId::TrA2Evol => "trA2-evol",
            EquationId::TracelessEvol => "traceless-evol",
            EquationId::QuotientHuisken => "quotient-huisken",
        }
    }

    pub fn parse(s: &str) -> Option<EquationId> {
        EquationId::ALL.into_iter().find(|e| e.name() == s)
    }
}

/// One trajectory at one resolution feeding a residual report.
pub struct ResidualRun<'a> {
    pub resolution: usize,
    pub traj: &'a Trajectory,
    pub model: Option<&'a SubmersionModel>,
}

/// Per-equation discrepancy summary.
#[derive(Clone, Debug)]
pub struct ResidualReport {
    pub eq: EquationId,
    /// Sampled times of the reference (finest) run.
    pub times: Vec<f64>,
    /// Max-node |LHS - RHS| per sampled time at the reference resolution.
    pub residual_norm: Vec<f64>,
    pub max_residual: f64,
    /// Largest magnitude of either side, used for tolerance scaling.
    pub scale: f64,
    pub per_resolution: Vec<(usize, f64)>,
    /// Log-log slope of residual against resolution (needs >= 3 runs).
    pub convergence_order: Option<f64>,
    /// True when every run sits at the numerical floor, in which case no
    /// meaningful order can be measured.
    pub at_floor: bool,
    pub tolerance: f64,
    pub pass: bool,
}

/// Residuals this far below the tolerance (as a fraction of it) count as the
/// numerical floor: time-difference roundoff grows like 1/dt with resolution,
/// so a slope fitted through such values measures noise, not convergence.
const FLOOR_FRACTION: f64 = 1e-2;

/// Evaluate one equation across one or more resolutions.
///
/// `tol` is the absolute residual tolerance at the reference resolution,
/// scaled by the magnitude of the tracked quantity.  The pass verdict also
/// requires an empirical convergence order of at least 1.5 whenever at least
/// three resolutions were run and the residuals sit above the floor.
pub fn evolution_residual(
    eq: EquationId,
    runs: &[ResidualRun],
    tol: f64,
) -> Result<ResidualReport> {
    if runs.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut per_resolution = Vec::with_capacity(runs.len());
    let mut ref_times = Vec::new();
    let mut ref_res = Vec::new();
    let mut scale = 0.0f64;
    let mut ref_n = 0usize;
    for run in runs {
        let (times, res, sc) = residuals_for_run(eq, run)?;
        let worst = res.iter().cloned().fold(0.0f64, f64::max);
        per_resolution.push((run.resolution, worst));
        scale = scale.max(sc);
        if run.resolution > ref_n {
            ref_n = run.resolution;
            ref_times = times;
            ref_res = res;
        }
    }
    per_resolution.sort_by_key(|&(n, _)| n);
    let max_residual = ref_res.iter().cloned().fold(0.0f64, f64::max);

    let tol_eff = tol * scale.max(1.0);
    let floor_level = FLOOR_FRACTION * tol_eff;
    let at_floor = per_resolution.iter().all(|&(_, r)| r <= floor_level);
    let convergence_order = if per_resolution.len() >= 3 && !at_floor {
        Some(fit_order(&per_resolution, floor_level))
    } else {
        None
    };

    let order_ok = at_floor
        || per_resolution.len() < 3
        || convergence_order.map(|p| p >= 1.5).unwrap_or(false);
    let pass = max_residual <= tol_eff && order_ok;

    Ok(ResidualReport {
        eq,
        times: ref_times,
        residual_norm: ref_res,
        max_residual,
        scale,
        per_resolution,
        convergence_order,
        at_floor,
        tolerance: tol_eff,
        pass,
    })
}

fn fit_order(per_resolution: &[(usize, f64)], floor: f64) -> f64 {
    // least-squares slope of ln(res) against ln(1/N)
    let pts: Vec<(f64, f64)> = per_resolution
        .iter()
        .map(|&(n, r)| ((n as f64).ln(), r.max(floor * 1e-2).ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    -slope
}

/// Time-derivative weights for a nonuniform three-point stencil.
#[inline]
fn ddt(fm: f64, f0: f64, fp: f64, h1: f64, h2: f64) -> f64 {
    -h2 / (h1 * (h1 + h2)) * fm + (h2 - h1) / (h1 * h2) * f0 + h1 / (h2 * (h1 + h2)) * fp
}

struct CSnap {
    t: f64,
    step: u64,
    cache: CurveCache,
    nodes: Vec<f64>,
}

struct GSnap {
    t: f64,
    step: u64,
    cache: crate::mesh::GraphCache,
}

fn residuals_for_run(eq: EquationId, run: &ResidualRun) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let traj = run.traj;
    if traj.snapshots.len() < 5 {
        return Err(Error::InsufficientSnapshots { needed: 5, got: traj.snapshots.len() });
    }
    match traj.template.kind {
        ImmersionKind::RadialGraph { .. } => residuals_graph(eq, traj),
        _ => residuals_curve(eq, run),
    }
}

// -------------------------------------------------------------------------
// curve / section path

fn residuals_curve(eq: EquationId, run: &ResidualRun) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let traj = run.traj;
    let chart = &traj.template.chart;
    let is_section = matches!(traj.template.kind, ImmersionKind::SectionCurve { .. });

    match eq {
        EquationId::XiEvol
        | EquationId::Simons
        | EquationId::HEvol
        | EquationId::TrA2Evol
        | EquationId::NormHEvol
        | EquationId::TracelessEvol => {
            if !chart.flat {
                return Err(Error::ModelMismatch {
                    equation: eq.name().into(),
                    reason: "requires a flat ambient chart (curved bases use quotient-huisken)"
                        .into(),
                });
            }
        }
        EquationId::LaplacianSplit => {
            if !is_section || run.model.is_none() {
                return Err(Error::ModelMismatch {
                    equation: eq.name().into(),
                    reason: "needs a cylinder section in a translation model".into(),
                });
            }
        }
        EquationId::GEvol | EquationId::QuotientHuisken => {}
    }

    let mut snaps = Vec::with_capacity(traj.snapshots.len());
    for k in 0..traj.snapshots.len() {
        let im = traj.immersion_at(k);
        let cache = match crate::mesh::fundamental_forms(&im)? {
            GeometryCache::Curve(c) => c,
            _ => unreachable!(),
        };
        snaps.push(CSnap {
            t: traj.snapshots[k].t,
            step: traj.snapshots[k].step,
            cache,
            nodes: im.nodes,
        });
    }

    let mut times = Vec::new();
    let mut residuals = Vec::new();
    let mut scale = 0.0f64;
    for k in 1..snaps.len() - 1 {
        if window_has_resample(traj, snaps[k - 1].step, snaps[k + 1].step) {
            continue;
        }
        let (worst, sc) =
            curve_triplet_residual(eq, &snaps[k - 1], &snaps[k], &snaps[k + 1], run.model, chart)?;
        times.push(snaps[k].t);
        residuals.push(worst);
        scale = scale.max(sc);
    }
    if residuals.is_empty() {
        return Err(Error::InsufficientSnapshots { needed: 5, got: 0 });
    }
    Ok((times, residuals, scale))
}

fn window_has_resample(traj: &Trajectory, step_lo: u64, step_hi: u64) -> bool {
    traj.resample_steps.iter().any(|&s| s > step_lo && s <= step_hi)
}

/// Coupling terms at one node from the submersion fundamental tensor; all
/// exactly zero for translation models (and structurally zero without one).
struct NodeCoupling {
    /// <(A_ξ)² u_h, u_h>: the uu-component of ((A_ξ)²)_♯.
    a2xi_sharp_uu: f64,
    /// Tr ((A_ξ)²)_H (1-dimensional horizontal trace).
    tr_a2xi: f64,
    /// Coupling tensor evaluated in the unit horizontal frame.
    calr_frame: f64,
}

impl NodeCoupling {
    fn zero() -> Self {
        NodeCoupling { a2xi_sharp_uu: 0.0, tr_a2xi: 0.0, calr_frame: 0.0 }
    }
}

fn node_coupling(
    model: Option<&SubmersionModel>,
    cache: &CurveCache,
    nodes: &[f64],
    dim: usize,
    i: usize,
    dkappa: &[f64],
) -> Result<NodeCoupling> {
    let Some(model) = model else {
        return Ok(NodeCoupling::zero());
    };
    let x = &nodes[i * dim..(i + 1) * dim];
    let vert = model.vertical_frame(x);
    let k = vert.len();
    let xu = &cache.x_u[i];
    // horizontal part of the coordinate tangent
    let mut uh = [xu[0], xu[1], xu[2]];
    for v in &vert {
        let c: f64 = (0..dim).map(|d| uh[d] * v[d]).sum();
        for d in 0..dim {
            uh[d] -= c * v[d];
        }
    }
    let uh_v: Vec<f64> = uh[..dim].to_vec();
    let g = cache.g[i];
    let xi: Vec<f64> = cache.xi[i][..dim].to_vec();

    let a_xi_uh = model.oneill_a(x, &xi, &uh_v)?;
    let a_xi_sq_uh = model.oneill_a(x, &xi, &a_xi_uh)?;
    let a2xi_sharp_uu: f64 = (0..dim).map(|d| a_xi_sq_uh[d] * uh_v[d]).sum();
    let tr_a2xi = a2xi_sharp_uu / g;

    // coupling tensor in the unit horizontal frame {e} ∪ vertical frame
    let e: Vec<f64> = uh_v.iter().map(|v| v / g.sqrt()).collect();
    let m = 1 + k;
    let frame: Vec<Vec<f64>> = std::iter::once(e.clone()).chain(vert.iter().cloned()).collect();
    let mut inp = CalRInputs::zeros(1, k);
    // h in the frame: h(e,e) = kappa; fiber entries vanish for translation
    // models (parallel flat fibers), which is the only kind flowed here.
    inp.h[0] = cache.kappa[i];
    inp.grad_h[0] = dkappa[i] / g.sqrt();
    let project = |w: &[f64]| -> Vec<f64> {
        frame
            .iter()
            .map(|f| (0..dim).map(|d| w[d] * f[d]).sum::<f64>())
            .collect()
    };
    for (a, fa) in frame.iter().enumerate() {
        let w = model.oneill_a(x, &e, fa)?;
        let coords = project(&w);
        for (b, cb) in coords.iter().enumerate() {
            inp.a_op[b * m + a] = *cb;
        }
        // (∇_e A)_e f_a by centered differences of the tensor field along e
        let h = model.fd_step;
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        for d in 0..dim {
            xp[d] += h * e[d];
            xm[d] -= h * e[d];
        }
        let wp = model.oneill_a(&xp, &e, fa)?;
        let wm = model.oneill_a(&xm, &e, fa)?;
        let dv: Vec<f64> = wp.iter().zip(&wm).map(|(p, q)| (p - q) / (2.0 * h)).collect();
        let coords = project(&dv);
        for (b, cb) in coords.iter().enumerate() {
            inp.grad_a[b * m + a] = *cb;
        }
    }
    let r = calr_eval(&inp)?;
    Ok(NodeCoupling { a2xi_sharp_uu, tr_a2xi, calr_frame: r[0] })
}

fn curve_triplet_residual(
    eq: EquationId,
    prev: &CSnap,
    cur: &CSnap,
    next: &CSnap,
    model: Option<&SubmersionModel>,
    chart: &MetricChart,
) -> Result<(f64, f64)> {
    let c = &cur.cache;
    let n = c.n;
    let dim = chart.dim;
    let h1 = cur.t - prev.t;
    let h2 = next.t - cur.t;
    if h1 <= 0.0 || h2 <= 0.0 {
        return Err(Error::TimeGridMismatch("snapshot times not increasing".into()));
    }

    let dkappa = d1_periodic(&c.kappa, c.du);
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    let mut upd = |lhs: f64, rhs: f64| {
        worst = worst.max((lhs - rhs).abs());
        scale = scale.max(lhs.abs()).max(rhs.abs());
    };

    match eq {
        EquationId::GEvol => {
            for i in 0..n {
                let lhs = ddt(prev.cache.g[i], c.g[i], next.cache.g[i], h1, h2);
                let rhs = -2.0 * c.kappa[i] * c.h[i];
                upd(lhs, rhs);
            }
        }
        EquationId::XiEvol => {
            // ∂ξ/∂t = -F_*(grad ||H||)
            for i in 0..n {
                let grad = dkappa[i] / c.g[i];
                let mut r2 = 0.0;
                for d in 0..dim {
                    let lhs =
                        ddt(prev.cache.xi[i][d], c.xi[i][d], next.cache.xi[i][d], h1, h2);
                    let rhs = -grad * c.x_u[i][d];
                    r2 += (lhs - rhs) * (lhs - rhs);
                    scale = scale.max(lhs.abs()).max(rhs.abs());
                }
                worst = worst.max(r2.sqrt());
            }
        }
        EquationId::HEvol => {
            let lap_h = curve_lap_sym2(c, &c.h);
            for i in 0..n {
                let cp = node_coupling(model, c, &cur.nodes, dim, i, &dkappa)?;
                let lhs = ddt(prev.cache.h[i], c.h[i], next.cache.h[i], h1, h2);
                let ka = c.kappa[i];
                let rhs = lap_h[i] - 2.0 * ka * (ka * ka * c.g[i]) - 2.0 * ka * cp.a2xi_sharp_uu
                    + (ka * ka - cp.tr_a2xi) * c.h[i]
                    - cp.calr_frame * c.g[i];
                upd(lhs, rhs);
            }
        }
        EquationId::Simons => {
            // Δ_H h = ∇ d||H|| + ||H|| (A²)_♯ - Tr (A²)_H · h, with the full
            // shape operator A = A_H + A_ξ-coupling
            let lap_h = curve_lap_sym2(c, &c.h);
            let hess = curve_hess_scalar(c, &c.kappa);
            for i in 0..n {
                let cp = node_coupling(model, c, &cur.nodes, dim, i, &dkappa)?;
                let ka = c.kappa[i];
                let lhs = lap_h[i];
                let a2_sharp_uu = ka * ka * c.g[i] + cp.a2xi_sharp_uu;
                let tr_a2_h = ka * ka - cp.tr_a2xi;
                let rhs = hess[i] + ka * a2_sharp_uu - tr_a2_h * c.h[i];
                upd(lhs, rhs);
            }
        }
        EquationId::LaplacianSplit => {
            let model = model.expect("checked above");
            let (surf, frame, corr) = laplacian_split_paths(c, &cur.nodes, dim, model, &dkappa)?;
            for i in 0..n {
                upd(surf[i], frame[i] - corr[i]);
            }
        }
        EquationId::NormHEvol => {
            let lap = curve_lap_scalar(c, &c.kappa);
            for i in 0..n {
                let cp = node_coupling(model, c, &cur.nodes, dim, i, &dkappa)?;
                let lhs = ddt(prev.cache.kappa[i], c.kappa[i], next.cache.kappa[i], h1, h2);
                let ka = c.kappa[i];
                let rhs = lap[i] + ka * ka * ka - 3.0 * ka * cp.tr_a2xi;
                upd(lhs, rhs);
            }
        }
        EquationId::TrA2Evol => {
            let tra2: Vec<f64> = c.kappa.iter().map(|k| k * k).collect();
            let tra2_prev: Vec<f64> = prev.cache.kappa.iter().map(|k| k * k).collect();
            let tra2_next: Vec<f64> = next.cache.kappa.iter().map(|k| k * k).collect();
            let lap = curve_lap_scalar(c, &tra2);
            for i in 0..n {
                let cp = node_coupling(model, c, &cur.nodes, dim, i, &dkappa)?;
                let lhs = ddt(tra2_prev[i], tra2[i], tra2_next[i], h1, h2);
                let grad_a_sq = dkappa[i] * dkappa[i] / c.g[i];
                let ka = c.kappa[i];
                let rhs = lap[i] - 2.0 * grad_a_sq
                    + 2.0 * tra2[i] * (tra2[i] - cp.tr_a2xi)
                    - 4.0 * ka * (ka * cp.tr_a2xi)
                    - 2.0 * ka * cp.calr_frame;
                upd(lhs, rhs);
            }
        }
        EquationId::TracelessEvol => {
            // q = Tr A² - ||H||²/n with n = 1 on curves
            let q: Vec<f64> = c.kappa.iter().map(|k| k * k - k * k).collect();
            let q_prev: Vec<f64> = prev.cache.kappa.iter().map(|k| k * k - k * k).collect();
            let q_next: Vec<f64> = next.cache.kappa.iter().map(|k| k * k - k * k).collect();
            let lap = curve_lap_scalar(c, &q);
            for i in 0..n {
                let cp = node_coupling(model, c, &cur.nodes, dim, i, &dkappa)?;
                let lhs = ddt(q_prev[i], q[i], q_next[i], h1, h2);
                let ka = c.kappa[i];
                let grad_h_sq = dkappa[i] * dkappa[i] / c.g[i];
                let grad_a_sq = grad_h_sq;
                let tra2 = ka * ka;
                let rhs = lap[i] + 2.0 * grad_h_sq - 2.0 * grad_a_sq
                    + 2.0 * tra2 * q[i]
                    - 2.0 * cp.tr_a2xi * q[i]
                    - 4.0 * ka * (cp.tr_a2xi * (ka - ka))
                    - 2.0 * (ka - ka) * cp.calr_frame;
                upd(lhs, rhs);
            }
        }
        EquationId::QuotientHuisken => {
            let lap = curve_lap_scalar(c, &c.kappa);
            for i in 0..n {
                let ric = if chart.flat {
                    0.0
                } else {
                    let x = &cur.nodes[i * dim..(i + 1) * dim];
                    let data = chart.curvature(x)?;
                    let mut s = 0.0;
                    for a in 0..dim {
                        for b in 0..dim {
                            // Ric(ξ, ξ) with ξ in chart components
                            s += data.ricci(a, b) * c.xi[i][a] * c.xi[i][b];
                        }
                    }
                    s
                };
                let lhs = ddt(prev.cache.kappa[i], c.kappa[i], next.cache.kappa[i], h1, h2);
                let ka = c.kappa[i];
                let rhs = lap[i] + ka * (ka * ka + ric);
                upd(lhs, rhs);
            }
        }
    }
    Ok((worst, scale))
}

/// Both discrete realizations of the horizontal Laplacian of h on a cylinder
/// section, plus the fundamental-tensor correction terms (zero here), all
/// expressed in the unit horizontal frame.
fn laplacian_split_paths(
    c: &CurveCache,
    nodes: &[f64],
    dim: usize,
    model: &SubmersionModel,
    dkappa: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if model.vertical_dim != 1 {
        return Err(Error::ModelMismatch {
            equation: "laplacian-split".into(),
            reason: "implemented for one-dimensional fibers".into(),
        });
    }
    let n = c.n;
    // full surface metric components on (u, z): G_uu = |c'|², G_uz = z'
    let zp: Vec<f64> = (0..n).map(|i| c.x_u[i][2]).collect();
    let guu_full: Vec<f64> = (0..n).map(|i| c.g[i] + zp[i] * zp[i]).collect();
    let dguu = d1_periodic(&guu_full, c.du);
    let dzp = d1_periodic(&zp, c.du);
    // Γ^u_uu of the surface metric, assembled from the full G fields
    let gamma_u: Vec<f64> = (0..n)
        .map(|i| {
            let det = guu_full[i] - zp[i] * zp[i];
            0.5 * ((dguu[i] - 2.0 * zp[i] * dzp[i]) / det)
        })
        .collect();
    // T = (∇_u S)_uu with S = h (only the uu component is nonzero)
    let sh = &c.h;
    let dsh = d1_periodic(sh, c.du);
    let t_field: Vec<f64> = (0..n).map(|i| dsh[i] - 2.0 * gamma_u[i] * sh[i]).collect();
    let dt_field = d1_periodic(&t_field, c.du);
    // surface path: (∇²S)(e,e;e,e) = (T' - 3ΓT)/g_h²
    let surf: Vec<f64> = (0..n)
        .map(|i| (dt_field[i] - 3.0 * gamma_u[i] * t_field[i]) / (c.g[i] * c.g[i]))
        .collect();
    // frame path: e(e(s)) with s = h(e,e) = kappa
    let s_frame = &c.kappa;
    let ds = d1_periodic(s_frame, c.du);
    let es: Vec<f64> = (0..n).map(|i| ds[i] / c.g[i].sqrt()).collect();
    let des = d1_periodic(&es, c.du);
    let frame: Vec<f64> = (0..n).map(|i| des[i] / c.g[i].sqrt()).collect();
    // correction: the coupling tensor with S in place of h
    let mut corr = vec![0.0; n];
    for (i, ci) in corr.iter_mut().enumerate() {
        let cp = node_coupling(Some(model), c, nodes, dim, i, dkappa)?;
        *ci = cp.calr_frame;
    }
    Ok((surf, frame, corr))
}

// -------------------------------------------------------------------------
// graph path

fn residuals_graph(eq: EquationId, traj: &Trajectory) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    match eq {
        EquationId::GEvol | EquationId::NormHEvol | EquationId::TracelessEvol => {}
        _ => {
            return Err(Error::ModelMismatch {
                equation: eq.name().into(),
                reason: "only g-evol, normH-evol and traceless-evol run on radial graphs".into(),
            })
        }
    }
    let grid = match &traj.template.kind {
        ImmersionKind::RadialGraph { grid } => grid.clone(),
        _ => unreachable!(),
    };
    let mut snaps = Vec::with_capacity(traj.snapshots.len());
    for k in 0..traj.snapshots.len() {
        let im = traj.immersion_at(k);
        let cache = match crate::mesh::fundamental_forms(&im)? {
            GeometryCache::Graph(c) => c,
            _ => unreachable!(),
        };
        snaps.push(GSnap { t: traj.snapshots[k].t, step: traj.snapshots[k].step, cache });
    }
    let _ = snaps[0].step;

    let mut times = Vec::new();
    let mut residuals = Vec::new();
    let mut scale = 0.0f64;
    for k in 1..snaps.len() - 1 {
        let (p, c, nx) = (&snaps[k - 1], &snaps[k], &snaps[k + 1]);
        let (h1, h2) = (c.t - p.t, nx.t - c.t);
        let n = c.cache.norm_h.len();
        let mut worst = 0.0f64;
        match eq {
            EquationId::GEvol => {
                for i in 0..n {
                    for comp in 0..3 {
                        let lhs =
                            ddt(p.cache.g[i][comp], c.cache.g[i][comp], nx.cache.g[i][comp], h1, h2);
                        let rhs = -2.0 * c.cache.norm_h[i] * c.cache.h[i][comp];
                        worst = worst.max((lhs - rhs).abs());
                        scale = scale.max(lhs.abs()).max(rhs.abs());
                    }
                }
            }
            EquationId::NormHEvol => {
                let lap = crate::mesh::graph_laplacian_scalar(&grid, &c.cache, &c.cache.norm_h);
                for i in 0..n {
                    let lhs =
                        ddt(p.cache.norm_h[i], c.cache.norm_h[i], nx.cache.norm_h[i], h1, h2);
                    let a = &c.cache.a[i];
                    let tra2 = a[0] * a[0] + 2.0 * a[1] * a[2] + a[3] * a[3];
                    let rhs = lap[i] + c.cache.norm_h[i] * tra2;
                    worst = worst.max((lhs - rhs).abs());
                    scale = scale.max(lhs.abs()).max(rhs.abs());
                }
            }
            EquationId::TracelessEvol => {
                let q_of = |cc: &crate::mesh::GraphCache, i: usize| -> f64 {
                    let a = &cc.a[i];
                    let tra2 = a[0] * a[0] + 2.0 * a[1] * a[2] + a[3] * a[3];
                    tra2 - cc.norm_h[i] * cc.norm_h[i] / 2.0
                };
                let q: Vec<f64> = (0..n).map(|i| q_of(&c.cache, i)).collect();
                let lap = crate::mesh::graph_laplacian_scalar(&grid, &c.cache, &q);
                let grad2 = crate::mesh::graph_grad_norm_sq(&grid, &c.cache, &c.cache.norm_h);
                let nabla_a2 = crate::mesh::graph_shape_gradient_norm_sq(&grid, &c.cache);
                for i in 0..n {
                    let lhs = ddt(q_of(&p.cache, i), q[i], q_of(&nx.cache, i), h1, h2);
                    let a = &c.cache.a[i];
                    let tra2 = a[0] * a[0] + 2.0 * a[1] * a[2] + a[3] * a[3];
                    let rhs = lap[i] + grad2[i] - 2.0 * nabla_a2[i] + 2.0 * tra2 * q[i];
                    worst = worst.max((lhs - rhs).abs());
                    scale = scale.max(lhs.abs()).max(rhs.abs());
                }
            }
            _ => unreachable!(),
        }
        times.push(c.t);
        residuals.push(worst);
    }
    Ok((times, residuals, scale))
}
