//! Maximum-principle monitors, convexity thresholds, the extinction-time
//! bound, and the lift/projection consistency check.

use crate::error::{Error, Result};
use crate::flow::{StopReason, Trajectory};
use crate::mesh::{
    curve_gamma, d1_periodic, d2_periodic, eig2, GeometryCache, ImmersionKind,
};
use crate::submersion::SubmersionModel;

/// Per-step scalar track of a monitored quantity.
#[derive(Clone, Debug)]
pub struct MonitorSeries {
    pub name: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub threshold: f64,
    /// First time the value crossed the threshold beyond tolerance.
    pub violated_at: Option<f64>,
    /// Whether the theorem hypothesis held at t = 0; preservation claims are
    /// only made when it did.
    pub hypothesis_ok: bool,
}

impl MonitorSeries {
    fn from_values(name: impl Into<String>, times: Vec<f64>, values: Vec<f64>, tol: f64) -> Self {
        let hypothesis_ok = values.first().map(|&v| v > 0.0).unwrap_or(false);
        let mut violated_at = None;
        for (t, v) in times.iter().zip(&values) {
            if *v < -tol {
                violated_at = Some(*t);
                break;
            }
        }
        MonitorSeries { name: name.into(), times, values, threshold: 0.0, violated_at, hypothesis_ok }
    }
}

/// Which symmetric tensor the barrier monitor tracks.
#[derive(Clone, Copy, Debug)]
pub enum TensorChoice {
    /// The induced metric itself (eigenvalues identically one).
    Metric,
    /// The second fundamental form measured against g (eigenvalues of A).
    SecondFundamental,
}

fn tensor_min_eig(cache: &GeometryCache, choice: TensorChoice, shift: f64) -> f64 {
    let n = cache.node_count();
    let mut worst = f64::INFINITY;
    for i in 0..n {
        let v = match (cache, choice) {
            (_, TensorChoice::Metric) => 1.0 + shift,
            (GeometryCache::Curve(c), TensorChoice::SecondFundamental) => c.kappa[i] + shift,
            (GeometryCache::Graph(c), TensorChoice::SecondFundamental) => {
                let a = &c.a[i];
                eig2(&[a[0] + shift, a[1], a[2], a[3] + shift]).0
            }
        };
        worst = worst.min(v);
    }
    worst
}

/// Track the generalized minimum eigenvalue of a tensor and of its barrier
/// S + ε(δ+t) g along a trajectory.  Returns (tensor series, barrier series).
pub fn max_principle_monitor(
    traj: &Trajectory,
    tensor: TensorChoice,
    eps: f64,
    delta: f64,
    tol: f64,
) -> Result<(MonitorSeries, MonitorSeries)> {
    let mut times = Vec::with_capacity(traj.snapshots.len());
    let mut vals = Vec::with_capacity(traj.snapshots.len());
    let mut barrier = Vec::with_capacity(traj.snapshots.len());
    for k in 0..traj.snapshots.len() {
        let cache = traj.cache_at(k)?;
        let t = traj.snapshots[k].t;
        times.push(t);
        vals.push(tensor_min_eig(&cache, tensor, 0.0));
        barrier.push(tensor_min_eig(&cache, tensor, eps * (delta + t)));
    }
    let name = match tensor {
        TensorChoice::Metric => "metric",
        TensorChoice::SecondFundamental => "second-fundamental",
    };
    let s = MonitorSeries::from_values(name, times.clone(), vals, tol);
    let b = MonitorSeries::from_values(format!("{name}-barrier"), times, barrier, tol);
    Ok((s, b))
}

/// Reaction term of the scalar maximum principle.
#[derive(Clone)]
pub enum Reaction {
    /// P(ρ) = Σ c_k ρ^k with coefficients in ascending order.
    Polynomial(Vec<f64>),
    /// Opaque callback; rejected because its sign at zero cannot be checked.
    Callback(std::sync::Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NullSign {
    NonNegative,
    NonPositive,
}

impl Reaction {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Reaction::Polynomial(c) => {
                let mut acc = 0.0;
                for &ck in c.iter().rev() {
                    acc = acc * x + ck;
                }
                acc
            }
            Reaction::Callback(f) => f(x),
        }
    }

    fn deriv_bound(&self, x: f64) -> f64 {
        match self {
            Reaction::Polynomial(c) => {
                let mut acc = 0.0;
                for (k, &ck) in c.iter().enumerate().skip(1) {
                    acc += (k as f64 * ck).abs() * x.abs().powi(k as i32 - 1);
                }
                acc
            }
            Reaction::Callback(_) => 0.0,
        }
    }
}

/// Co-evolve ρ by dρ/dt = Δ_H ρ + P(ρ) over the recorded mesh motion and
/// report sign preservation.  Returns the monitor series of min ρ and the
/// full ρ field at every snapshot.
pub fn scalar_max_principle(
    traj: &Trajectory,
    rho0: &[f64],
    reaction: &Reaction,
    expect: NullSign,
    tol: f64,
) -> Result<(MonitorSeries, Vec<Vec<f64>>)> {
    let p0 = match reaction {
        Reaction::Polynomial(c) => c.first().copied().unwrap_or(0.0),
        Reaction::Callback(_) => return Err(Error::ReactionSignUnknown),
    };
    match expect {
        NullSign::NonNegative if p0 < 0.0 => {
            return Err(Error::ScenarioInvalid(format!(
                "reaction violates the null condition: P(0) = {p0} < 0"
            )))
        }
        NullSign::NonPositive if p0 > 0.0 => {
            return Err(Error::ScenarioInvalid(format!(
                "reaction violates the null condition: P(0) = {p0} > 0"
            )))
        }
        _ => {}
    }
    if traj.snapshots.is_empty() {
        return Err(Error::InsufficientSnapshots { needed: 2, got: 0 });
    }
    let n_nodes = traj.template.n_nodes();
    if rho0.len() != n_nodes {
        return Err(Error::ShapeMismatch {
            expected: format!("{n_nodes}"),
            got: format!("{}", rho0.len()),
        });
    }
    if !traj.resample_steps.is_empty() {
        return Err(Error::ModelMismatch {
            equation: "scalar-max-principle".into(),
            reason: "co-evolution needs a resample-free trajectory (node identity)".into(),
        });
    }

    let mut rho = rho0.to_vec();
    let mut fields = vec![rho.clone()];
    let mut times = vec![traj.snapshots[0].t];
    let mut values = vec![rho.iter().cloned().fold(f64::INFINITY, f64::min)];

    for k in 0..traj.snapshots.len() - 1 {
        let dt_total = traj.snapshots[k + 1].t - traj.snapshots[k].t;
        let im = traj.immersion_at(k);
        let cache = crate::mesh::fundamental_forms(&im)?;

        // frozen-mesh Laplacian for this interval
        let lap: Box<dyn Fn(&[f64]) -> Vec<f64>> = match &cache {
            GeometryCache::Curve(c) => {
                let g = c.g.clone();
                let gamma = curve_gamma(c);
                let du = c.du;
                Box::new(move |f: &[f64]| {
                    let f1 = d1_periodic(f, du);
                    let f2 = d2_periodic(f, du);
                    (0..f.len()).map(|i| (f2[i] - gamma[i] * f1[i]) / g[i]).collect()
                })
            }
            GeometryCache::Graph(gc) => {
                let grid = match &im.kind {
                    ImmersionKind::RadialGraph { grid } => grid.clone(),
                    _ => unreachable!(),
                };
                let gc = gc.clone();
                Box::new(move |f: &[f64]| crate::mesh::graph_laplacian_scalar(&grid, &gc, f))
            }
        };

        // stiffness estimate: diffusion on a uniform field is exactly zero,
        // so only the reaction constrains the substep there
        let spread = {
            let mx = rho.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mn = rho.iter().cloned().fold(f64::INFINITY, f64::min);
            mx - mn
        };
        let scale = rho.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-30);
        let lambda = if spread <= 1e-13 * scale {
            reaction.deriv_bound(scale)
        } else {
            let diff = match &cache {
                GeometryCache::Curve(c) => {
                    let du = c.du;
                    c.g.iter().map(|g| 4.0 / (g * du * du)).fold(0.0f64, f64::max)
                }
                GeometryCache::Graph(gc) => {
                    let grid = match &im.kind {
                        ImmersionKind::RadialGraph { grid } => grid.clone(),
                        _ => unreachable!(),
                    };
                    gc.g
                        .iter()
                        .map(|g| 4.0 / (g[0] * grid.dtheta * grid.dtheta)
                            + 4.0 / (g[2] * grid.dphi * grid.dphi))
                        .fold(0.0f64, f64::max)
                }
            };
            diff + reaction.deriv_bound(scale)
        };
        let substeps = ((dt_total * lambda / 2.0).ceil() as usize).max(1);
        let h = dt_total / substeps as f64;
        for _ in 0..substeps {
            let f = |r: &Vec<f64>| -> Vec<f64> {
                let l = lap(r);
                r.iter().zip(&l).map(|(x, lx)| lx + reaction.eval(*x)).collect()
            };
            let k1 = f(&rho);
            let y2: Vec<f64> = rho.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
            let k2 = f(&y2);
            let y3: Vec<f64> = rho.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
            let k3 = f(&y3);
            let y4: Vec<f64> = rho.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
            let k4 = f(&y4);
            for (i, r) in rho.iter_mut().enumerate() {
                *r += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        times.push(traj.snapshots[k + 1].t);
        values.push(rho.iter().cloned().fold(f64::INFINITY, f64::min));
        fields.push(rho.clone());
    }

    let mut series = MonitorSeries::from_values("scalar-max-principle", times, values, tol);
    // hypothesis for the scalar principle: initial sign condition
    series.hypothesis_ok = match expect {
        NullSign::NonNegative => rho0.iter().all(|&v| v >= -tol),
        NullSign::NonPositive => rho0.iter().all(|&v| v <= tol),
    };
    Ok((series, fields))
}

/// min over nodes of min-eig(||H||² h - 2 n² L g), with the hypothesis gate
/// of the convexity preservation theorem.
pub fn convexity_monitor(traj: &Trajectory, l: f64, n: usize, tol: f64) -> Result<MonitorSeries> {
    let mut times = Vec::new();
    let mut values = Vec::new();
    for k in 0..traj.snapshots.len() {
        let cache = traj.cache_at(k)?;
        let m = cache.node_count();
        let mut worst = f64::INFINITY;
        for i in 0..m {
            let hn = cache.norm_h(i);
            worst = worst.min(hn * hn * cache.min_eig_a(i) - 2.0 * (n * n) as f64 * l);
        }
        times.push(traj.snapshots[k].t);
        values.push(worst);
    }
    Ok(MonitorSeries::from_values("convexity", times, values, tol))
}

/// Quotient-space version with threshold n² L_N.
pub fn quotient_convexity_monitor(
    traj: &Trajectory,
    l_n: f64,
    n: usize,
    tol: f64,
) -> Result<MonitorSeries> {
    let mut times = Vec::new();
    let mut values = Vec::new();
    for k in 0..traj.snapshots.len() {
        let cache = traj.cache_at(k)?;
        let m = cache.node_count();
        let mut worst = f64::INFINITY;
        for i in 0..m {
            let hn = cache.norm_h(i);
            worst = worst.min(hn * hn * cache.min_eig_a(i) - (n * n) as f64 * l_n);
        }
        times.push(traj.snapshots[k].t);
        values.push(worst);
    }
    Ok(MonitorSeries::from_values("quotient-convexity", times, values, tol))
}

/// Outcome of the extinction-time bound test T <= n / (2 ρ(0)²).
#[derive(Clone, Debug)]
pub struct ExtinctionCheck {
    pub bound: f64,
    pub measured_t: f64,
    pub rho0: f64,
    pub pass: bool,
}

pub fn extinction_bound_check(traj: &Trajectory, n: usize, tol_rel: f64) -> Result<ExtinctionCheck> {
    if traj.stop != StopReason::ExtinctionProxy {
        return Err(Error::NotExtinct(traj.stop.label().into()));
    }
    let rho0 = traj.initial_min_norm_h;
    if rho0 <= 0.0 {
        return Err(Error::ScenarioInvalid("initial min ||H|| must be positive".into()));
    }
    let bound = n as f64 / (2.0 * rho0 * rho0);
    let measured_t = traj.final_time();
    Ok(ExtinctionCheck { bound, measured_t, rho0, pass: measured_t <= bound * (1.0 + tol_rel) })
}

fn point_seg_dist2(p: &[f64], a: &[f64], b: &[f64], dim: usize) -> f64 {
    let mut ab2 = 0.0;
    let mut ap_ab = 0.0;
    for k in 0..dim {
        let e = b[k] - a[k];
        ab2 += e * e;
        ap_ab += (p[k] - a[k]) * e;
    }
    let t = if ab2 > 0.0 { (ap_ab / ab2).clamp(0.0, 1.0) } else { 0.0 };
    let mut d2 = 0.0;
    for k in 0..dim {
        let c = a[k] + t * (b[k] - a[k]);
        d2 += (p[k] - c) * (p[k] - c);
    }
    d2
}

/// Symmetric Hausdorff distance between two closed polylines (packed nodes).
pub fn polyline_hausdorff(a: &[f64], b: &[f64], dim: usize) -> f64 {
    let directed = |from: &[f64], to: &[f64]| -> f64 {
        let n_from = from.len() / dim;
        let n_to = to.len() / dim;
        let mut worst = 0.0f64;
        for i in 0..n_from {
            let p = &from[i * dim..(i + 1) * dim];
            let mut best = f64::INFINITY;
            for j in 0..n_to {
                let jn = (j + 1) % n_to;
                let d2 = point_seg_dist2(
                    p,
                    &to[j * dim..(j + 1) * dim],
                    &to[jn * dim..(jn + 1) * dim],
                    dim,
                );
                best = best.min(d2);
            }
            worst = worst.max(best);
        }
        worst.sqrt()
    };
    directed(a, b).max(directed(b, a))
}

/// Sup over time-aligned snapshots of the Hausdorff distance between the
/// projected total-space flow and the base flow, normalized by the base
/// diameter at each snapshot.
pub fn lift_consistency_check(
    model: &SubmersionModel,
    total_traj: &Trajectory,
    base_traj: &Trajectory,
) -> Result<f64> {
    let count = total_traj.snapshots.len().min(base_traj.snapshots.len());
    if count == 0 {
        return Err(Error::InsufficientSnapshots { needed: 1, got: 0 });
    }
    let tdim = model.total_dim();
    let bdim = model.base_dim();
    let mut sup = 0.0f64;
    for k in 0..count {
        let ts = &total_traj.snapshots[k];
        let bs = &base_traj.snapshots[k];
        if (ts.t - bs.t).abs() > 1e-9 * (1.0 + ts.t.abs()) {
            return Err(Error::TimeGridMismatch(format!(
                "snapshot {k}: t = {} vs {}",
                ts.t, bs.t
            )));
        }
        let projected: Vec<f64> = ts
            .nodes
            .chunks(tdim)
            .flat_map(|p| model.project(p))
            .collect();
        let n = bs.nodes.len() / bdim;
        let mut diam2 = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let mut s = 0.0;
                for d in 0..bdim {
                    let dx = bs.nodes[i * bdim + d] - bs.nodes[j * bdim + d];
                    s += dx * dx;
                }
                diam2 = diam2.max(s);
            }
        }
        let h = polyline_hausdorff(&projected, &bs.nodes, bdim);
        sup = sup.max(h / diam2.sqrt().max(1e-30));
    }
    Ok(sup)
}
