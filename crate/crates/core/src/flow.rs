//! Time integration of mean curvature flow: explicit RK4 on the node degrees
//! of freedom with a parabolic CFL step, stop-condition handling, periodic
//! arc-length resampling, orbifold re-symmetrization, and horizontal lifts of
//! base flows into a submersion total space.

use crate::error::{Error, Result};
use crate::mesh::{
    fundamental_forms, resample, DiscreteImmersion, GeometryCache, GraphGrid, ImmersionKind,
};
use crate::orbifold::OrbifoldAtlas;
use crate::submersion::SubmersionModel;
use std::sync::Arc;

/// Integrator knobs.
#[derive(Clone, Debug)]
pub struct IntegratorParams {
    pub cfl: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    pub t_max: f64,
    /// Resample curves every this many accepted steps (0 = never).
    pub resample_every: usize,
    /// Use a fixed step instead of the adaptive one (still clipped to t_max);
    /// lift comparisons use this to align time grids between runs.
    pub fixed_dt: Option<f64>,
}

impl Default for IntegratorParams {
    fn default() -> Self {
        IntegratorParams {
            cfl: 0.2,
            dt_max: 1e-2,
            dt_min: 1e-12,
            t_max: 10.0,
            resample_every: 10,
            fixed_dt: None,
        }
    }
}

/// Ambient setting of a scenario.
#[derive(Clone)]
pub enum Setting {
    Euclidean,
    Orbifold {
        atlas: OrbifoldAtlas,
        /// Stop distance from the singular set; nonpositive means
        /// 0.05 x initial diameter.
        singular_margin: f64,
    },
    Submersion { model: SubmersionModel },
}

/// Inline per-step monitors recorded into the series.
#[derive(Clone, Debug)]
pub enum Monitor {
    /// min over nodes of min-eig(||H||² h - 2 n² L g) measured against g.
    Convexity { l: f64, n: usize },
    /// Quotient version: min-eig(||H||² h - n² L_N g).
    QuotientConvexity { l_n: f64, n: usize },
    /// Barrier eigenvalue floor of h + ε(δ+t) g.
    Barrier { eps: f64, delta: f64 },
}

impl Monitor {
    pub fn name(&self) -> String {
        match self {
            Monitor::Convexity { .. } => "convexity".into(),
            Monitor::QuotientConvexity { .. } => "quotient-convexity".into(),
            Monitor::Barrier { .. } => "barrier".into(),
        }
    }

    pub fn eval(&self, t: f64, cache: &GeometryCache) -> f64 {
        let n_nodes = cache.node_count();
        let mut worst = f64::INFINITY;
        for i in 0..n_nodes {
            let v = match self {
                Monitor::Convexity { l, n } => {
                    let hn = cache.norm_h(i);
                    hn * hn * cache.min_eig_a(i) - 2.0 * (*n as f64) * (*n as f64) * l
                }
                Monitor::QuotientConvexity { l_n, n } => {
                    let hn = cache.norm_h(i);
                    hn * hn * cache.min_eig_a(i) - (*n as f64) * (*n as f64) * l_n
                }
                Monitor::Barrier { eps, delta } => cache.min_eig_a(i) + eps * (delta + t),
            };
            worst = worst.min(v);
        }
        worst
    }
}

/// A flow scenario ready to integrate.
#[derive(Clone)]
pub struct Scenario {
    pub name: String,
    pub setting: Setting,
    pub initial: DiscreteImmersion,
    pub params: IntegratorParams,
    /// Record a snapshot every this many accepted steps (>= 1).
    pub snapshot_cadence: usize,
    /// Stop when length/area falls below (factor * initial mean spacing)².
    pub extinction_factor: f64,
    pub monitors: Vec<Monitor>,
}

impl Scenario {
    pub fn new(name: impl Into<String>, initial: DiscreteImmersion) -> Self {
        Scenario {
            name: name.into(),
            setting: Setting::Euclidean,
            initial,
            params: IntegratorParams::default(),
            snapshot_cadence: 5,
            extinction_factor: 10.0,
            monitors: Vec::new(),
        }
    }
}

/// Why a trajectory stopped.
#[derive(Clone, Debug, PartialEq)]
pub enum StopReason {
    ExtinctionProxy,
    TMax,
    Blowup,
    QualityFailure(String),
    SingularContact,
    DomainExit,
}

impl StopReason {
    pub fn label(&self) -> &'static str {
        match self {
            StopReason::ExtinctionProxy => "extinction-proxy",
            StopReason::TMax => "t-max",
            StopReason::Blowup => "blowup",
            StopReason::QualityFailure(_) => "quality-failure",
            StopReason::SingularContact => "singular-contact",
            StopReason::DomainExit => "domain-exit",
        }
    }
}

/// Immersion + time + cached geometry; the unit advanced by the integrator.
#[derive(Clone)]
pub struct FlowState {
    pub t: f64,
    pub step_index: u64,
    pub im: DiscreteImmersion,
    pub cache: GeometryCache,
}

impl FlowState {
    pub fn new(im: DiscreteImmersion) -> Result<Self> {
        let cache = fundamental_forms(&im)?;
        Ok(FlowState { t: 0.0, step_index: 0, im, cache })
    }

    pub fn at_time(t: f64, step_index: u64, im: DiscreteImmersion) -> Result<Self> {
        let cache = fundamental_forms(&im)?;
        Ok(FlowState { t, step_index, im, cache })
    }
}

/// Node snapshot at one accepted step.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub step: u64,
    pub nodes: Vec<f64>,
}

/// One scalar record per accepted step.
#[derive(Clone, Debug)]
pub struct SeriesRecord {
    pub t: f64,
    pub step: u64,
    pub len_or_area: f64,
    pub min_norm_h: f64,
    pub max_norm_h: f64,
    pub min_eig_a: f64,
    pub monitors: Vec<f64>,
}

/// Recorded flow history.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub template: DiscreteImmersion,
    pub snapshots: Vec<Snapshot>,
    pub series: Vec<SeriesRecord>,
    pub monitor_names: Vec<String>,
    pub stop: StopReason,
    pub initial_mean_spacing: f64,
    pub initial_min_norm_h: f64,
    pub resample_steps: Vec<u64>,
    /// Worst deviation from group invariance seen at symmetrization events
    /// (orbifold scenarios only).
    pub max_invariance_dev: f64,
}

impl Trajectory {
    pub fn immersion_at(&self, k: usize) -> DiscreteImmersion {
        let mut im = self.template.clone();
        im.nodes = self.snapshots[k].nodes.clone();
        im
    }

    pub fn cache_at(&self, k: usize) -> Result<GeometryCache> {
        fundamental_forms(&self.immersion_at(k))
    }

    pub fn final_time(&self) -> f64 {
        self.snapshots.last().map(|s| s.t).unwrap_or(0.0)
    }

    /// Coordinate diameter of the initial snapshot.
    pub fn initial_diameter(&self) -> f64 {
        diameter(&self.template.chart, &self.snapshots[0].nodes, self.template.chart.dim)
    }
}

fn diameter(chart: &crate::chart::MetricChart, nodes: &[f64], dim: usize) -> f64 {
    let n = nodes.len() / dim;
    let mut d2 = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut s = 0.0;
            for k in 0..dim {
                let dx = nodes[i * dim + k] - nodes[j * dim + k];
                s += dx * dx;
            }
            d2 = d2.max(s);
        }
    }
    let _ = chart;
    d2.sqrt()
}

/// Zonal filter that removes longitude modes too stiff for the explicit step
/// near the poles of a radial graph.  Row weights form a circulant projection
/// onto the retained Fourier modes; rows away from the poles are untouched.
pub struct PolarFilter {
    n_lon: usize,
    /// Per latitude row: None = identity, Some(first circulant row).
    rows: Vec<Option<Vec<f64>>>,
}

impl PolarFilter {
    pub fn new(grid: &GraphGrid, cfl: f64) -> Self {
        let (nlat, nlon) = (grid.n_lat, grid.n_lon);
        let half = nlon / 2;
        // keep mode k iff cfl * dθ² * 4 sin²(k dφ/2) / (sin²θ dφ²) <= 2.5
        let budget = 2.5 / (4.0 * cfl);
        let mut rows = Vec::with_capacity(nlat);
        for i in 0..nlat {
            let s = grid.theta[i].sin();
            let bound = budget * s * s * (grid.dphi / grid.dtheta).powi(2);
            let keep = |k: usize| -> bool {
                let x = (k as f64 * grid.dphi / 2.0).sin();
                x * x <= bound
            };
            if keep(half) {
                rows.push(None);
                continue;
            }
            let mut c = vec![0.0; nlon];
            for (m, cm) in c.iter_mut().enumerate() {
                let mut acc = 1.0; // k = 0 always kept
                for k in 1..half {
                    if keep(k) {
                        acc += 2.0 * (2.0 * std::f64::consts::PI * (k * m) as f64
                            / nlon as f64)
                            .cos();
                    }
                }
                if keep(half) {
                    acc += (std::f64::consts::PI * m as f64).cos();
                }
                *cm = acc / nlon as f64;
            }
            rows.push(Some(c));
        }
        PolarFilter { n_lon: nlon, rows }
    }

    /// Filter a tendency field in place.
    pub fn apply(&self, f: &mut [f64]) {
        let nlon = self.n_lon;
        let mut buf = vec![0.0; nlon];
        for (i, row) in self.rows.iter().enumerate() {
            let Some(c) = row else { continue };
            let base = i * nlon;
            for (j, b) in buf.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (m, cm) in c.iter().enumerate() {
                    acc += cm * f[base + (j + nlon - m) % nlon];
                }
                *b = acc;
            }
            f[base..base + nlon].copy_from_slice(&buf);
        }
    }
}

/// Owns what a step needs besides the state (the polar filter for graphs).
pub struct Stepper {
    pub cfl: f64,
    filter: Option<PolarFilter>,
}

impl Stepper {
    pub fn new(im: &DiscreteImmersion, cfl: f64) -> Self {
        let filter = match &im.kind {
            ImmersionKind::RadialGraph { grid } => Some(PolarFilter::new(grid, cfl)),
            _ => None,
        };
        Stepper { cfl, filter }
    }

    /// Velocity of the node degrees of freedom: the mean curvature vector for
    /// curves, the radial speed <H, ξ> / <ω, ξ> for graphs.
    fn velocity(&self, im: &DiscreteImmersion, cache: &GeometryCache) -> Vec<f64> {
        match cache {
            GeometryCache::Curve(c) => {
                let d = im.chart.dim;
                let mut v = vec![0.0; c.n * d];
                for i in 0..c.n {
                    for k in 0..d {
                        v[i * d + k] = c.hvec[i][k];
                    }
                }
                v
            }
            GeometryCache::Graph(c) => {
                let n = c.norm_h.len();
                let mut v = vec![0.0; n];
                for i in 0..n {
                    v[i] = c.norm_h[i] / c.omega_dot_xi[i];
                }
                if let Some(filter) = &self.filter {
                    filter.apply(&mut v);
                }
                v
            }
        }
    }

    fn velocity_of_nodes(&self, template: &DiscreteImmersion, nodes: Vec<f64>) -> Result<Vec<f64>> {
        let mut im = template.clone();
        im.nodes = nodes;
        let cache = fundamental_forms(&im)?;
        Ok(self.velocity(&im, &cache))
    }

    /// One RK4 step; every stage re-evaluates the mean curvature velocity.
    pub fn mcf_step(&self, s: &FlowState, dt: f64) -> Result<FlowState> {
        let x0 = &s.im.nodes;
        let n = x0.len();
        let k1 = self.velocity(&s.im, &s.cache);
        let stage = |k: &[f64], scale: f64| -> Vec<f64> {
            (0..n).map(|i| x0[i] + scale * dt * k[i]).collect()
        };
        let k2 = self.velocity_of_nodes(&s.im, stage(&k1, 0.5))?;
        let k3 = self.velocity_of_nodes(&s.im, stage(&k2, 0.5))?;
        let k4 = self.velocity_of_nodes(&s.im, stage(&k3, 1.0))?;
        let mut nodes = vec![0.0; n];
        for i in 0..n {
            nodes[i] = x0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let mut im = s.im.clone();
        im.nodes = nodes;
        im.quality_check()?;
        let cache = fundamental_forms(&im)?;
        Ok(FlowState { t: s.t + dt, step_index: s.step_index + 1, im, cache })
    }

    /// dt = cfl * min(Δs², 1 / (max ||A||² + ε)), capped by dt_max.
    /// Δs is the smallest node spacing (equal to the mean on uniform meshes).
    pub fn adaptive_dt(&self, s: &FlowState, params: &IntegratorParams) -> f64 {
        let spacing = match &s.cache {
            GeometryCache::Curve(c) => {
                let gmin = c.g.iter().cloned().fold(f64::INFINITY, f64::min);
                gmin.sqrt() * c.du
            }
            GeometryCache::Graph(_) => {
                let grid = match &s.im.kind {
                    ImmersionKind::RadialGraph { grid } => grid,
                    _ => unreachable!(),
                };
                let rmin = s.im.nodes.iter().cloned().fold(f64::INFINITY, f64::min);
                rmin * grid.dtheta
            }
        };
        let amax = s.cache.max_abs_shape();
        let dt = self.cfl * (spacing * spacing).min(1.0 / (amax * amax + 1e-12));
        dt.min(params.dt_max)
    }
}

/// Convenience wrapper matching the one-shot signature.
pub fn mcf_step(s: &FlowState, dt: f64) -> Result<FlowState> {
    Stepper::new(&s.im, 0.2).mcf_step(s, dt)
}

pub fn adaptive_dt(s: &FlowState, params: &IntegratorParams) -> f64 {
    Stepper::new(&s.im, params.cfl).adaptive_dt(s, params)
}

/// Integrate a scenario to a stop condition.
pub fn run_flow(sc: &Scenario) -> Result<Trajectory> {
    let state = FlowState::new(sc.initial.clone())?;
    run_flow_from(sc, state)
}

/// Integrate starting from the given state (used to resume a persisted run);
/// extinction thresholds and the t = 0 reference values still come from the
/// scenario's initial immersion.
pub fn run_flow_from(sc: &Scenario, mut state: FlowState) -> Result<Trajectory> {
    let stepper = Stepper::new(&sc.initial, sc.params.cfl);
    let cadence = sc.snapshot_cadence.max(1);

    let initial_cache = fundamental_forms(&sc.initial)?;
    let n_nodes = sc.initial.n_nodes() as f64;
    let initial_mean_spacing = match &initial_cache {
        GeometryCache::Curve(c) => c.length / n_nodes,
        GeometryCache::Graph(c) => (c.area / n_nodes).sqrt(),
    };
    let extinction_threshold =
        (sc.extinction_factor * initial_mean_spacing) * (sc.extinction_factor * initial_mean_spacing);

    let initial_min_norm_h = (0..initial_cache.node_count())
        .map(|i| initial_cache.norm_h(i))
        .fold(f64::INFINITY, f64::min);

    // orbifold bookkeeping
    let mut singular_margin = 0.0;
    if let Setting::Orbifold { atlas, singular_margin: m } = &sc.setting {
        let chart = atlas.single_chart();
        let dev = chart.curve_invariance_deviation(&state.im.nodes);
        let diam = diameter(&state.im.chart, &state.im.nodes, state.im.chart.dim);
        if dev > 1e-8 * (1.0 + diam) {
            return Err(Error::NotInvariant { deviation: dev });
        }
        singular_margin = if *m > 0.0 { *m } else { 0.05 * diam };
    }

    let monitor_names: Vec<String> = sc.monitors.iter().map(|m| m.name()).collect();
    let mut traj = Trajectory {
        template: sc.initial.clone(),
        snapshots: vec![Snapshot {
            t: state.t,
            step: state.step_index,
            nodes: state.im.nodes.clone(),
        }],
        series: Vec::new(),
        monitor_names,
        stop: StopReason::TMax,
        initial_mean_spacing,
        initial_min_norm_h,
        resample_steps: Vec::new(),
        max_invariance_dev: 0.0,
    };

    loop {
        if state.t >= sc.params.t_max - 1e-15 {
            traj.stop = StopReason::TMax;
            break;
        }
        let mut dt = sc
            .params
            .fixed_dt
            .unwrap_or_else(|| stepper.adaptive_dt(&state, &sc.params));
        dt = dt.min(sc.params.t_max - state.t);
        if dt < sc.params.dt_min {
            traj.stop = StopReason::Blowup;
            break;
        }

        // attempt the step, halving dt on mesh-quality rejections
        let mut attempt = None;
        for _ in 0..48 {
            match stepper.mcf_step(&state, dt) {
                Ok(next) => {
                    attempt = Some(next);
                    break;
                }
                Err(Error::StepRejected(_)) | Err(Error::DegenerateNode { .. }) => {
                    dt *= 0.5;
                    if dt < sc.params.dt_min {
                        break;
                    }
                }
                Err(Error::OutOfDomain { .. }) => {
                    traj.stop = StopReason::DomainExit;
                    finalize(&mut traj, &state);
                    return Ok(traj);
                }
                Err(e) => return Err(e),
            }
        }
        let Some(next) = attempt else {
            traj.stop = StopReason::Blowup;
            break;
        };
        state = next;

        // orbifold: stay clear of the singular set
        if let Setting::Orbifold { .. } = &sc.setting {
            let d = state.im.chart.dim;
            let min_r = (0..state.im.nodes.len() / d)
                .map(|i| {
                    state.im.nodes[i * d..(i + 1) * d]
                        .iter()
                        .map(|v| v * v)
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            if min_r < singular_margin {
                traj.stop = StopReason::SingularContact;
                finalize(&mut traj, &state);
                return Ok(traj);
            }
        }

        // resampling + re-symmetrization cadence
        if sc.params.resample_every > 0
            && state.step_index % sc.params.resample_every as u64 == 0
            && !matches!(state.im.kind, ImmersionKind::RadialGraph { .. })
        {
            let mut im = resample(&state.im)?;
            if let Setting::Orbifold { atlas, .. } = &sc.setting {
                let chart = atlas.single_chart();
                let (sym, dev) = chart.symmetrize_curve(&im.nodes);
                traj.max_invariance_dev = traj.max_invariance_dev.max(dev);
                im.nodes = sym;
            }
            im.check_separation()?;
            traj.resample_steps.push(state.step_index);
            state = FlowState::at_time(state.t, state.step_index, im)?;
        }

        record(&mut traj, &state, &sc.monitors, cadence);

        if state.cache.len_or_area() < extinction_threshold {
            traj.stop = StopReason::ExtinctionProxy;
            break;
        }
    }

    finalize(&mut traj, &state);
    Ok(traj)
}

fn record(traj: &mut Trajectory, state: &FlowState, monitors: &[Monitor], cadence: usize) {
    let cache = &state.cache;
    let n = cache.node_count();
    let mut min_h = f64::INFINITY;
    let mut max_h = f64::NEG_INFINITY;
    let mut min_a = f64::INFINITY;
    for i in 0..n {
        min_h = min_h.min(cache.norm_h(i));
        max_h = max_h.max(cache.norm_h(i));
        min_a = min_a.min(cache.min_eig_a(i));
    }
    traj.series.push(SeriesRecord {
        t: state.t,
        step: state.step_index,
        len_or_area: cache.len_or_area(),
        min_norm_h: min_h,
        max_norm_h: max_h,
        min_eig_a: min_a,
        monitors: monitors.iter().map(|m| m.eval(state.t, cache)).collect(),
    });
    if state.step_index % cadence as u64 == 0 {
        traj.snapshots.push(Snapshot {
            t: state.t,
            step: state.step_index,
            nodes: state.im.nodes.clone(),
        });
    }
}

fn finalize(traj: &mut Trajectory, state: &FlowState) {
    if traj.snapshots.last().map(|s| s.step) != Some(state.step_index) {
        traj.snapshots.push(Snapshot {
            t: state.t,
            step: state.step_index,
            nodes: state.im.nodes.clone(),
        });
    }
}

/// Flow an invariant lift in an orbifold cover chart; a thin wrapper that
/// assembles the orbifold scenario.
pub fn orbifold_flow(
    atlas: &OrbifoldAtlas,
    invariant_curve: DiscreteImmersion,
    params: IntegratorParams,
    snapshot_cadence: usize,
) -> Result<Trajectory> {
    let mut sc = Scenario::new("orbifold-flow", invariant_curve);
    sc.setting = Setting::Orbifold { atlas: atlas.clone(), singular_margin: 0.0 };
    sc.params = params;
    sc.snapshot_cadence = snapshot_cadence;
    run_flow(&sc)
}

/// Horizontal lift of every base node trajectory into the total space.
///
/// The base motion between snapshots is interpolated with cubic Hermite
/// polynomials built from the recorded node velocities; the lift ODE
/// dx/dt = (horizontal lift of the base velocity at x) is integrated with
/// RK4 over each snapshot interval.
pub fn lift_flow(
    model: &SubmersionModel,
    base_traj: &Trajectory,
    basepoint_map: &dyn Fn(usize, &[f64]) -> Vec<f64>,
) -> Result<Trajectory> {
    let snaps = &base_traj.snapshots;
    if snaps.len() < 2 {
        return Err(Error::InsufficientSnapshots { needed: 2, got: snaps.len() });
    }
    let bdim = model.base_dim();
    let tdim = model.total_dim();
    let n = snaps[0].nodes.len() / bdim;
    let translation = model.kind == crate::submersion::SubmersionKind::TranslationGroup;

    // recompute base velocities at every snapshot
    let mut vels: Vec<Vec<f64>> = Vec::with_capacity(snaps.len());
    for k in 0..snaps.len() {
        let im = base_traj.immersion_at(k);
        let cache = fundamental_forms(&im)?;
        let c = cache.as_curve()?;
        let mut v = vec![0.0; n * bdim];
        for i in 0..n {
            for d in 0..bdim {
                v[i * bdim + d] = c.hvec[i][d];
            }
        }
        vels.push(v);
    }

    // initial lift
    let mut lifted = vec![0.0; n * tdim];
    for i in 0..n {
        let base = &snaps[0].nodes[i * bdim..(i + 1) * bdim];
        let p = basepoint_map(i, base);
        if p.len() != tdim {
            return Err(Error::FrameMismatch(format!(
                "basepoint map returned dimension {}, expected {tdim}",
                p.len()
            )));
        }
        lifted[i * tdim..(i + 1) * tdim].copy_from_slice(&p);
    }
    let template = DiscreteImmersion::new_section_curve(model, lifted.clone())?;

    let diam = base_traj.initial_diameter().max(1e-12);
    let mut out_snaps = vec![Snapshot { t: snaps[0].t, step: snaps[0].step, nodes: lifted.clone() }];

    for k in 0..snaps.len() - 1 {
        let (t0, t1) = (snaps[k].t, snaps[k + 1].t);
        let h = t1 - t0;
        if h <= 0.0 {
            return Err(Error::TimeGridMismatch("snapshots not strictly increasing".into()));
        }
        for i in 0..n {
            let p0 = &snaps[k].nodes[i * bdim..(i + 1) * bdim];
            let p1 = &snaps[k + 1].nodes[i * bdim..(i + 1) * bdim];
            let v0 = &vels[k][i * bdim..(i + 1) * bdim];
            let v1 = &vels[k + 1][i * bdim..(i + 1) * bdim];
            // cubic Hermite velocity c'(t0 + s h), s in [0,1]
            let vel_at = |s: f64| -> Vec<f64> {
                (0..bdim)
                    .map(|d| {
                        let dh00 = 6.0 * s * s - 6.0 * s;
                        let dh10 = 3.0 * s * s - 4.0 * s + 1.0;
                        let dh01 = -6.0 * s * s + 6.0 * s;
                        let dh11 = 3.0 * s * s - 2.0 * s;
                        (dh00 * p0[d] + dh01 * p1[d]) / h + dh10 * v0[d] + dh11 * v1[d]
                    })
                    .collect()
            };
            let x = &mut lifted[i * tdim..(i + 1) * tdim];
            if translation {
                // horizontal lift of v is (v, 0): positions follow the base
                // exactly, fiber coordinates stay constant
                let vert: Vec<f64> = x[bdim..].to_vec();
                x[..bdim].copy_from_slice(p1);
                x[bdim..].copy_from_slice(&vert);
            } else {
                // RK4 on the lift ODE
                let mut y = x.to_vec();
                let lift_vel = |pos: &[f64], s: f64| -> Result<Vec<f64>> {
                    model.horizontal_lift(pos, &vel_at(s))
                };
                let k1 = lift_vel(&y, 0.0)?;
                let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
                let k2 = lift_vel(&y2, 0.5)?;
                let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
                let k3 = lift_vel(&y3, 0.5)?;
                let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
                let k4 = lift_vel(&y4, 1.0)?;
                for d in 0..tdim {
                    y[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
                }
                x.copy_from_slice(&y);
            }
            // lift must stay over the base flow line
            let proj = model.project(x);
            let err: f64 = model
                .base_chart
                .delta(&proj, p1)
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            if err > 1e-6 * diam {
                return Err(Error::LiftDivergence(format!(
                    "node {i} drifted {err:.3e} off its base flow line"
                )));
            }
        }
        out_snaps.push(Snapshot {
            t: t1,
            step: snaps[k + 1].step,
            nodes: lifted.clone(),
        });
    }

    Ok(Trajectory {
        template,
        snapshots: out_snaps,
        series: Vec::new(),
        monitor_names: Vec::new(),
        stop: base_traj.stop.clone(),
        initial_mean_spacing: base_traj.initial_mean_spacing,
        initial_min_norm_h: base_traj.initial_min_norm_h,
        resample_steps: Vec::new(),
        max_invariance_dev: 0.0,
    })
}

/// Build the section immersion lifted over a circle with a sinusoidal fiber
/// profile; used by cylinder scenarios and tests.
pub fn lift_circle_section(
    model: &SubmersionModel,
    r: f64,
    n: usize,
    z_amplitude: f64,
) -> Result<DiscreteImmersion> {
    let tdim = model.total_dim();
    let nodes: Vec<f64> = (0..n)
        .flat_map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            let mut p = vec![r * a.cos(), r * a.sin()];
            p.resize(tdim, 0.0);
            p[tdim - 1] = z_amplitude * (2.0 * a).sin();
            p
        })
        .collect();
    DiscreteImmersion::new_section_curve(model, nodes)
}

/// Project the nodes of a cover-chart curve into the orbit space
/// (fundamental-domain representatives).
pub fn project_orbit_curve(atlas: &OrbifoldAtlas, nodes: &[f64]) -> Vec<f64> {
    let chart = atlas.single_chart();
    let mut out = Vec::with_capacity(nodes.len());
    for p in nodes.chunks(2) {
        out.extend(chart.project(p));
    }
    out
}

pub type ArcGraphGrid = Arc<GraphGrid>;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_rk4_step_matches_circle_ode() {
        let im = DiscreteImmersion::circle(1.0, 256);
        let state = FlowState::new(im).unwrap();
        let dt = 1e-4;
        let next = mcf_step(&state, dt).unwrap();
        let expect = (1.0 - 2.0 * dt).sqrt();
        for p in next.im.nodes.chunks(2) {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert_abs_diff_eq!(r, expect, epsilon = 1e-10);
        }
    }

    #[test]
    fn single_rk4_step_matches_sphere_ode() {
        let im = DiscreteImmersion::sphere_graph(1.0, 32, 64).unwrap();
        let state = FlowState::new(im).unwrap();
        let dt = 1e-4;
        let next = mcf_step(&state, dt).unwrap();
        let expect = (1.0 - 4.0 * dt).sqrt();
        for &r in &next.im.nodes {
            assert_abs_diff_eq!(r, expect, epsilon = 1e-8);
        }
    }

    #[test]
    fn adaptive_dt_arithmetic() {
        let im = DiscreteImmersion::circle(1.0, 256);
        let state = FlowState::new(im).unwrap();
        let params = IntegratorParams::default();
        let dt = adaptive_dt(&state, &params);
        let spacing = 2.0 * std::f64::consts::PI / 256.0;
        assert_abs_diff_eq!(dt, 0.2 * spacing * spacing, epsilon = 1e-8);

        // near extinction the curvature term wins
        let im = DiscreteImmersion::circle(0.05, 16);
        let state = FlowState::new(im).unwrap();
        let dt = adaptive_dt(&state, &params);
        let spacing = 2.0 * std::f64::consts::PI * 0.05 / 16.0;
        let by_spacing = 0.2 * spacing * spacing;
        let by_curv = 0.2 * (0.05 * 0.05);
        assert!(dt <= by_spacing.min(by_curv) * 1.01);

        // nearly flat piece: with max||A|| ~ 1e-3 the curvature bound 1/||A||²
        // dwarfs the spacing term, so dt = cfl * Δs²
        let model = SubmersionModel::translation(3, 1);
        let big: Vec<f64> = (0..64)
            .flat_map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / 64.0;
                [1e3 * t.cos(), 1e3 * t.sin(), 0.0]
            })
            .collect();
        let im = DiscreteImmersion::new_section_curve(&model, big).unwrap();
        let state = FlowState::new(im).unwrap();
        let mut p = IntegratorParams::default();
        p.dt_max = f64::INFINITY;
        let dt = adaptive_dt(&state, &p);
        let spacing = 2.0 * std::f64::consts::PI * 1e3 / 64.0;
        assert_abs_diff_eq!(dt, 0.2 * spacing * spacing, epsilon = 0.2 * spacing * spacing * 1e-3);
    }

    #[test]
    fn circle_extinction_time() {
        let mut sc = Scenario::new("circle", DiscreteImmersion::circle(1.0, 128));
        sc.params.t_max = 1.0;
        sc.snapshot_cadence = 1000;
        let traj = run_flow(&sc).unwrap();
        assert_eq!(traj.stop, StopReason::ExtinctionProxy);
        assert_abs_diff_eq!(traj.final_time(), 0.5, epsilon = 0.005);
        // length strictly decreasing
        for w in traj.series.windows(2) {
            assert!(w[1].len_or_area < w[0].len_or_area);
        }
        // min ||H|| nondecreasing for convex flows
        for w in traj.series.windows(2) {
            assert!(w[1].min_norm_h >= w[0].min_norm_h - 1e-6);
        }
    }

    #[test]
    fn flow_is_equivariant_under_rotations() {
        let n = 64;
        let base = DiscreteImmersion::ellipse(1.4, 1.0, n);
        let (s, c) = 0.9f64.sin_cos();
        let rotated_nodes: Vec<f64> = (0..n)
            .flat_map(|i| {
                let x = base.nodes[2 * i];
                let y = base.nodes[2 * i + 1];
                [c * x - s * y, s * x + c * y]
            })
            .collect();
        let rotated = DiscreteImmersion::new_periodic_curve(
            crate::chart::MetricChart::euclidean(2),
            rotated_nodes,
        )
        .unwrap();

        let mut st_a = FlowState::new(base).unwrap();
        let mut st_b = FlowState::new(rotated).unwrap();
        let stepper_a = Stepper::new(&st_a.im, 0.2);
        let stepper_b = Stepper::new(&st_b.im, 0.2);
        let params = IntegratorParams::default();
        for _ in 0..100 {
            let dt = stepper_a.adaptive_dt(&st_a, &params);
            st_a = stepper_a.mcf_step(&st_a, dt).unwrap();
            st_b = stepper_b.mcf_step(&st_b, dt).unwrap();
        }
        for i in 0..n {
            let x = st_a.im.nodes[2 * i];
            let y = st_a.im.nodes[2 * i + 1];
            let rx = c * x - s * y;
            let ry = s * x + c * y;
            assert_abs_diff_eq!(rx, st_b.im.nodes[2 * i], epsilon = 1e-9);
            assert_abs_diff_eq!(ry, st_b.im.nodes[2 * i + 1], epsilon = 1e-9);
        }
    }

    #[test]
    fn first_variation_of_length_on_circle() {
        // dL/dt = -∮ κ² ds
        let mut sc = Scenario::new("circle", DiscreteImmersion::circle(1.0, 128));
        sc.params.t_max = 0.02;
        sc.params.resample_every = 0;
        sc.snapshot_cadence = 1;
        let traj = run_flow(&sc).unwrap();
        let k = traj.series.len() / 2;
        let (a, b) = (&traj.series[k - 1], &traj.series[k + 1]);
        let dl_dt = (b.len_or_area - a.len_or_area) / (b.t - a.t);
        let mid = &traj.series[k];
        let r = mid.len_or_area / (2.0 * std::f64::consts::PI);
        let expect = -2.0 * std::f64::consts::PI / r;
        assert_abs_diff_eq!(dl_dt, expect, epsilon = expect.abs() * 0.01);
    }

    #[test]
    fn stationary_invariant_plane_stays_put() {
        // huge circle section: curvature 1e-6, displacement over a short run
        // is far below 1e-14 x diameter per step
        let model = SubmersionModel::translation(3, 1);
        let nodes: Vec<f64> = (0..32)
            .flat_map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / 32.0;
                [1e7 * t.cos(), 1e7 * t.sin(), 1.0]
            })
            .collect();
        let im = DiscreteImmersion::new_section_curve(&model, nodes.clone()).unwrap();
        let state = FlowState::new(im).unwrap();
        let next = mcf_step(&state, 1e-6).unwrap();
        for (a, b) in next.im.nodes.iter().zip(&nodes) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn peanut_curve_smooths_within_t_max() {
        let im = DiscreteImmersion::polar_curve(
            crate::chart::MetricChart::euclidean(2),
            |t| (0.2 + t.cos() * t.cos()).sqrt(),
            256,
        )
        .unwrap();
        let mut sc = Scenario::new("peanut", im);
        sc.params.t_max = 0.01;
        let traj = run_flow(&sc).unwrap();
        assert_eq!(traj.stop, StopReason::TMax);
        // curvature stays bounded along the run
        for rec in &traj.series {
            assert!(rec.max_norm_h.abs() < 50.0);
            assert!(rec.max_norm_h.is_finite());
        }
    }

    #[test]
    fn orbifold_circle_flow_matches_plane_circle() {
        let atlas = crate::orbifold::make_cone_atlas(3, 4.0).unwrap();
        let im = DiscreteImmersion::circle(1.0, 96);
        let mut params = IntegratorParams::default();
        params.t_max = 0.3;
        let traj = orbifold_flow(&atlas, im, params, 50).unwrap();
        assert!(traj.max_invariance_dev < 1e-8);
        for snap in &traj.snapshots {
            let expect = (1.0 - 2.0 * snap.t).sqrt();
            for p in snap.nodes.chunks(2) {
                let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                assert_abs_diff_eq!(r, expect, epsilon = 0.01 * expect);
            }
        }
    }

    #[test]
    fn cone_flow_stops_at_the_singular_margin() {
        // an invariant circle shrinking toward the apex must stop at the
        // 0.05 x diameter default margin, well before the extinction proxy
        let atlas = crate::orbifold::make_cone_atlas(3, 4.0).unwrap();
        let im = DiscreteImmersion::circle(1.0, 96);
        let mut params = IntegratorParams::default();
        params.t_max = 1.0;
        let traj = orbifold_flow(&atlas, im, params, 500).unwrap();
        assert_eq!(traj.stop, StopReason::SingularContact);
        let final_r: f64 = {
            let nodes = &traj.snapshots.last().unwrap().nodes;
            nodes.chunks(2).map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt()).sum::<f64>()
                / (nodes.len() / 2) as f64
        };
        assert!(final_r <= 0.12, "stopped at radius {final_r}");
        assert!(final_r >= 0.08, "stopped too early at radius {final_r}");
    }

    #[test]
    fn non_invariant_initial_lift_is_rejected() {
        let atlas = crate::orbifold::make_cone_atlas(3, 4.0).unwrap();
        // 64 is not divisible by 3: the rotated node set cannot match
        let im = DiscreteImmersion::circle(1.0, 64);
        let err = orbifold_flow(&atlas, im, IntegratorParams::default(), 10).unwrap_err();
        assert_eq!(err.code(), "not-invariant");
    }

    #[test]
    fn trivial_group_orbifold_flow_equals_plain_flow() {
        let atlas = crate::orbifold::make_plane_atlas(10.0);
        let im = DiscreteImmersion::circle(1.0, 64);
        let mut params = IntegratorParams::default();
        params.t_max = 0.05;
        let traj_orb = orbifold_flow(&atlas, im.clone(), params.clone(), 10).unwrap();

        let mut sc = Scenario::new("plain", im);
        sc.params = params;
        sc.snapshot_cadence = 10;
        let traj_plain = run_flow(&sc).unwrap();

        assert_eq!(traj_orb.snapshots.len(), traj_plain.snapshots.len());
        for (a, b) in traj_orb.snapshots.iter().zip(&traj_plain.snapshots) {
            for (x, y) in a.nodes.iter().zip(&b.nodes) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn lift_of_circle_flow_is_shrinking_cylinder() {
        let model = SubmersionModel::translation(3, 1);
        let mut sc = Scenario::new("base-circle", DiscreteImmersion::circle(1.0, 256));
        sc.params.t_max = 0.3;
        sc.params.resample_every = 0;
        sc.snapshot_cadence = 5;
        let base = run_flow(&sc).unwrap();

        let lifted = lift_flow(&model, &base, &|_i, b| {
            let ang = b[1].atan2(b[0]);
            vec![b[0], b[1], 0.25 * (2.0 * ang).sin()]
        })
        .unwrap();
        for snap in &lifted.snapshots {
            let expect = (1.0 - 2.0 * snap.t).sqrt();
            for p in snap.nodes.chunks(3) {
                let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                assert_abs_diff_eq!(r, expect, epsilon = 1e-6);
            }
        }
        // projection ∘ lift = base flow
        for (ls, bs) in lifted.snapshots.iter().zip(&base.snapshots) {
            for (lp, bp) in ls.nodes.chunks(3).zip(bs.nodes.chunks(2)) {
                let proj = model.project(lp);
                let d = ((proj[0] - bp[0]).powi(2) + (proj[1] - bp[1]).powi(2)).sqrt();
                assert!(d < 1e-8);
            }
        }
    }
}
