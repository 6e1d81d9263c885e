//! Subcommand implementations: run, verify, sweep, lift-compare.

use crate::config::{
    emit_scenario, scenario_hash, ChartCfg, GeometryCfg, ScenarioConfig, SettingKind,
};
use crate::error::{CliError, Result};
use crate::io;
use orbiflow_core::flow::{
    lift_flow, run_flow, run_flow_from, FlowState, Setting, Trajectory,
};
use orbiflow_core::verify::{
    convexity_monitor, evolution_residual, extinction_bound_check, lift_consistency_check,
    max_principle_monitor, quotient_convexity_monitor, scalar_max_principle, EquationId, NullSign,
    Reaction, ResidualRun, TensorChoice,
};
use std::path::{Path, PathBuf};

pub struct Options {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub resolution: Option<usize>,
    pub quiet: bool,
}

fn say(opts: &Options, msg: &str) {
    if !opts.quiet {
        println!("{msg}");
    }
}

fn emit_outputs(cfg: &ScenarioConfig, traj: &Trajectory, opts: &Options, suffix: &str) -> Result<()> {
    let series = opts.out_dir.join(suffix_path(&cfg.outputs.series_path, suffix));
    io::emit_series_csv(traj, &series)?;
    let vb = io::view_box_for(&traj.immersion_at(0));
    let markers: Vec<(f64, f64)> = match &cfg.setting {
        SettingKind::Orbifold => vec![(0.0, 0.0)],
        _ => vec![],
    };
    let snapdir = opts.out_dir.join(&cfg.outputs.snapshot_dir);
    // a handful of evenly spaced snapshots plus the final one
    let count = traj.snapshots.len();
    let picks: Vec<usize> = if count <= 6 {
        (0..count).collect()
    } else {
        (0..6).map(|i| i * (count - 1) / 5).collect()
    };
    for k in picks {
        let snap = &traj.snapshots[k];
        let im = traj.immersion_at(k);
        io::emit_snapshot_svg(
            &im,
            snap.t,
            vb,
            &markers,
            &snapdir.join(format!("{}{}-{:08}.svg", cfg.name, suffix, snap.step)),
        )?;
    }
    // final state snapshot for resuming
    let last = traj.snapshots.len() - 1;
    let cache = traj.cache_at(last)?;
    let snapfile = io::SnapshotFile {
        format_version: 1,
        scenario_hash: scenario_hash(cfg),
        t: traj.snapshots[last].t,
        step: traj.snapshots[last].step,
        nodes: traj.snapshots[last].nodes.clone(),
        norm_h: (0..cache.node_count()).map(|i| cache.norm_h(i)).collect(),
    };
    io::save_snapshot(&snapfile, &snapdir.join(format!("{}{}-final.snap", cfg.name, suffix)))?;
    Ok(())
}

fn suffix_path(base: &str, suffix: &str) -> String {
    if suffix.is_empty() {
        return base.to_string();
    }
    match base.rsplit_once('.') {
        Some((stem, ext)) => format!("{stem}{suffix}.{ext}"),
        None => format!("{base}{suffix}"),
    }
}

/// `run`: integrate one scenario and emit series + snapshots.
pub fn run(cfg: &ScenarioConfig, opts: &Options, resume: Option<&Path>) -> Result<i32> {
    let sc = cfg.to_scenario(opts.resolution)?;
    let traj = match resume {
        None => run_flow(&sc)?,
        Some(path) => {
            let snap = io::load_snapshot(path)?;
            if snap.scenario_hash != scenario_hash(cfg) {
                return Err(CliError::Io(format!(
                    "snapshot belongs to scenario {} but the config hashes to {}",
                    snap.scenario_hash,
                    scenario_hash(cfg)
                )));
            }
            let mut im = sc.initial.clone();
            im.nodes = snap.nodes;
            let state = FlowState::at_time(snap.t, snap.step, im)?;
            run_flow_from(&sc, state)?
        }
    };
    emit_outputs(cfg, &traj, opts, "")?;
    say(
        opts,
        &format!(
            "{}: stop = {} at t = {:.6} after {} steps",
            cfg.name,
            traj.stop.label(),
            traj.final_time(),
            traj.series.last().map(|r| r.step).unwrap_or(0)
        ),
    );
    Ok(0)
}

struct CheckRow {
    name: String,
    pass: bool,
    detail: String,
}

fn print_table(rows: &[CheckRow], opts: &Options) -> bool {
    let mut all = true;
    for row in rows {
        all &= row.pass;
        say(
            opts,
            &format!("{:<24} {}  {}", row.name, if row.pass { "PASS" } else { "FAIL" }, row.detail),
        );
    }
    all
}

/// Equations applicable to the scenario's geometry and setting.
fn applicable_equations(cfg: &ScenarioConfig) -> Vec<EquationId> {
    match (&cfg.setting, &cfg.geometry, &cfg.chart) {
        (_, GeometryCfg::Sphere { .. } | GeometryCfg::RadialGraph { .. }, _) => vec![
            EquationId::GEvol,
            EquationId::NormHEvol,
            EquationId::TracelessEvol,
        ],
        (SettingKind::Submersion, _, _) => vec![
            EquationId::GEvol,
            EquationId::XiEvol,
            EquationId::HEvol,
            EquationId::Simons,
            EquationId::LaplacianSplit,
            EquationId::NormHEvol,
            EquationId::TrA2Evol,
            EquationId::TracelessEvol,
        ],
        (_, _, ChartCfg::Euclidean) => vec![
            EquationId::GEvol,
            EquationId::XiEvol,
            EquationId::HEvol,
            EquationId::Simons,
            EquationId::NormHEvol,
            EquationId::TrA2Evol,
            EquationId::TracelessEvol,
        ],
        // curved base charts verify the curvature-corrected quotient form
        (_, _, _) => vec![EquationId::GEvol, EquationId::QuotientHuisken],
    }
}

fn residual_resolutions(cfg: &ScenarioConfig, opts: &Options) -> Vec<usize> {
    let n = match (&cfg.geometry, opts.resolution) {
        (_, Some(n)) => n,
        (GeometryCfg::Circle { n, .. }, _) => *n,
        (GeometryCfg::Ellipse { n, .. }, _) => *n,
        (GeometryCfg::Sphere { n_lat, .. }, _) => *n_lat,
        (GeometryCfg::Polyline { .. } | GeometryCfg::RadialGraph { .. }, _) => return vec![0],
    };
    // geometric ladder with a floor: very coarse meshes pollute the order fit
    let lo = (n.max(32) / 4).max(16);
    vec![lo, 2 * lo, 4 * lo]
}

/// `verify`: equation-residual suite plus monitors for one scenario.
pub fn verify(cfg: &ScenarioConfig, opts: &Options, tol: f64) -> Result<i32> {
    let mut rows = Vec::new();
    let model = cfg.model();

    // residual windows at three resolutions (single resolution for
    // file-defined geometries, which cannot be rebuilt at other sizes)
    let resolutions = residual_resolutions(cfg, opts);
    let mut windows: Vec<(usize, Trajectory)> = Vec::new();
    for &res in &resolutions {
        let over = if res == 0 { None } else { Some(res) };
        let mut sc = cfg.to_scenario(over)?;
        sc.params.resample_every = 0;
        sc.snapshot_cadence = 1;
        sc.extinction_factor = 0.0;
        // symmetrization is a no-op within a residual window; flow the lift
        // as a plain immersion so node identity is untouched
        sc.setting = match sc.setting {
            Setting::Orbifold { .. } | Setting::Euclidean => Setting::Euclidean,
            other => other,
        };
        let state = FlowState::new(sc.initial.clone())?;
        let dt = orbiflow_core::flow::adaptive_dt(&state, &sc.params);
        sc.params.t_max = dt * 24.0 * 0.999;
        let traj = run_flow(&sc)?;
        windows.push((sc.initial.n_nodes(), traj));
    }

    for eq in applicable_equations(cfg) {
        let runs: Vec<ResidualRun> = windows
            .iter()
            .map(|(n, t)| ResidualRun { resolution: *n, traj: t, model: model.as_ref() })
            .collect();
        match evolution_residual(eq, &runs, tol) {
            Ok(rep) => rows.push(CheckRow {
                name: eq.name().into(),
                pass: rep.pass,
                detail: format!(
                    "max residual {:.3e} (tol {:.3e}), order {}",
                    rep.max_residual,
                    rep.tolerance,
                    rep.convergence_order
                        .map(|p| format!("{p:.2}"))
                        .unwrap_or_else(|| if rep.at_floor { "at floor".into() } else { "-".into() })
                ),
            }),
            Err(e) => rows.push(CheckRow {
                name: eq.name().into(),
                pass: false,
                detail: format!("error: {e}"),
            }),
        }
    }

    // full flow for monitors and the extinction bound
    let sc = cfg.to_scenario(opts.resolution)?;
    let traj = run_flow(&sc)?;

    let conv = convexity_monitor(&traj, cfg.monitors.l, cfg.monitors.n, 1e-10)?;
    if conv.hypothesis_ok {
        rows.push(CheckRow {
            name: "convexity".into(),
            pass: conv.violated_at.is_none(),
            detail: match conv.violated_at {
                None => format!("min eig stayed positive (start {:.3e})", conv.values[0]),
                Some(t) => format!("violated at t = {t:.6}"),
            },
        });
    } else {
        rows.push(CheckRow {
            name: "convexity".into(),
            pass: true,
            detail: "hypothesis not satisfied at t = 0; no preservation claim".into(),
        });
    }
    if cfg.monitors.quotient {
        let q = quotient_convexity_monitor(&traj, cfg.monitors.l_n.max(0.0), cfg.monitors.n, 1e-10)?;
        rows.push(CheckRow {
            name: "quotient-convexity".into(),
            pass: !q.hypothesis_ok || q.violated_at.is_none(),
            detail: if q.hypothesis_ok {
                format!("min eig stayed positive (start {:.3e})", q.values[0])
            } else {
                "hypothesis not satisfied at t = 0; no preservation claim".into()
            },
        });
    }
    if cfg.monitors.check_ln_2l {
        let ok = (cfg.monitors.l_n - 2.0 * cfg.monitors.l).abs()
            <= 1e-9 * (1.0 + cfg.monitors.l_n.abs());
        rows.push(CheckRow {
            name: "l-n-consistency".into(),
            pass: ok,
            detail: format!("L_N = {} vs 2L = {}", cfg.monitors.l_n, 2.0 * cfg.monitors.l),
        });
    }

    let (tens, barrier) =
        max_principle_monitor(&traj, TensorChoice::SecondFundamental, cfg.monitors.eps, cfg.monitors.delta, 1e-10)?;
    rows.push(CheckRow {
        name: "tensor-barrier".into(),
        pass: !tens.hypothesis_ok || barrier.violated_at.is_none(),
        detail: format!(
            "barrier floor {:.3e} -> {:.3e}",
            barrier.values.first().unwrap_or(&f64::NAN),
            barrier.values.last().unwrap_or(&f64::NAN)
        ),
    });

    // scalar principle on a resample-free window of the same scenario
    {
        let mut wsc = cfg.to_scenario(opts.resolution)?;
        wsc.params.resample_every = 0;
        wsc.snapshot_cadence = 2;
        let state = FlowState::new(wsc.initial.clone())?;
        let dt = orbiflow_core::flow::adaptive_dt(&state, &wsc.params);
        wsc.params.t_max = (dt * 200.0).min(wsc.params.t_max);
        let wtraj = run_flow(&wsc)?;
        let n_nodes = wsc.initial.n_nodes();
        let reaction = Reaction::Polynomial(vec![0.0, 0.0, 0.0, 1.0 / cfg.monitors.n as f64]);
        let (series, _) =
            scalar_max_principle(&wtraj, &vec![1.0; n_nodes], &reaction, NullSign::NonNegative, 1e-8)?;
        rows.push(CheckRow {
            name: "scalar-max-principle".into(),
            pass: series.violated_at.is_none(),
            detail: format!("min rho {:.6} -> {:.6}", series.values[0], series.values.last().unwrap()),
        });
    }

    match extinction_bound_check(&traj, cfg.monitors.n, 0.02) {
        Ok(check) => rows.push(CheckRow {
            name: "extinction-bound".into(),
            pass: check.pass,
            detail: format!("measured T = {:.6}, bound {:.6}", check.measured_t, check.bound),
        }),
        Err(orbiflow_core::Error::NotExtinct(reason)) => rows.push(CheckRow {
            name: "extinction-bound".into(),
            pass: true,
            detail: format!("skipped: run stopped by {reason}"),
        }),
        Err(e) => return Err(e.into()),
    }

    let all = print_table(&rows, opts);
    Ok(if all { 0 } else { 1 })
}

/// `sweep`: run the declared parameter grid concurrently, one series file per
/// value.
pub fn sweep(cfg: &ScenarioConfig, opts: &Options) -> Result<i32> {
    let Some(sw) = &cfg.sweep else {
        return Err(CliError::Parse { line: 0, msg: "config has no [sweep] section".into() });
    };
    let mut jobs = Vec::new();
    for (idx, value) in sw.values.iter().enumerate() {
        let mut job = cfg.clone();
        apply_override(&mut job, &sw.key, *value)?;
        job.sweep = None;
        jobs.push((idx, job, *value));
    }
    let threads: usize = std::env::var("ORBIFLOW_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1);

    let results: Vec<Result<String>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for chunk in jobs.chunks((jobs.len() + threads - 1) / threads.max(1)) {
            let opts_ref = &*opts;
            handles.push(scope.spawn(move || {
                let mut outs = Vec::new();
                for (idx, job, value) in chunk {
                    let r = (|| -> Result<String> {
                        let sc = job.to_scenario(opts_ref.resolution)?;
                        let traj = run_flow(&sc)?;
                        emit_outputs(job, &traj, opts_ref, &format!("-{idx}"))?;
                        Ok(format!(
                            "{} {} = {}: stop = {} at t = {:.6}",
                            job.name,
                            job_key(job),
                            value,
                            traj.stop.label(),
                            traj.final_time()
                        ))
                    })();
                    outs.push(r);
                }
                outs
            }));
        }
        handles.into_iter().flat_map(|h| h.join().expect("sweep worker panicked")).collect()
    });

    let mut status = 0;
    for r in results {
        match r {
            Ok(msg) => say(opts, &msg),
            Err(e) => {
                eprintln!("ERROR {}: {}", e.code(), e);
                status = 1;
            }
        }
    }
    Ok(status)
}

fn job_key(cfg: &ScenarioConfig) -> String {
    match &cfg.geometry {
        GeometryCfg::Circle { r, .. } => format!("r={r}"),
        GeometryCfg::Ellipse { a, b, .. } => format!("a={a},b={b}"),
        GeometryCfg::Sphere { r, .. } => format!("r={r}"),
        _ => String::new(),
    }
}

fn apply_override(cfg: &mut ScenarioConfig, key: &str, value: f64) -> Result<()> {
    match (key, &mut cfg.geometry) {
        ("geometry.r", GeometryCfg::Circle { r, .. }) => *r = value,
        ("geometry.r", GeometryCfg::Sphere { r, .. }) => *r = value,
        ("geometry.a", GeometryCfg::Ellipse { a, .. }) => *a = value,
        ("geometry.b", GeometryCfg::Ellipse { b, .. }) => *b = value,
        ("integrator.cfl", _) => cfg.integrator.cfl = value,
        ("integrator.t_max", _) => cfg.integrator.t_max = value,
        ("monitors.l", _) => cfg.monitors.l = value,
        _ => {
            return Err(CliError::Parse {
                line: 0,
                msg: format!("sweep key '{key}' is not sweepable for this geometry"),
            })
        }
    }
    Ok(())
}

/// `lift-compare`: base flow vs directly-integrated total-space flow vs the
/// horizontal lift, on a shared fixed time grid.
pub fn lift_compare(cfg: &ScenarioConfig, opts: &Options) -> Result<i32> {
    if cfg.setting != SettingKind::Submersion {
        return Err(CliError::Parse { line: 0, msg: "lift-compare needs a submersion scenario".into() });
    }
    let model = cfg.model().expect("validated");
    let GeometryCfg::Circle { r, n } = cfg.geometry else {
        return Err(CliError::Parse { line: 0, msg: "lift-compare supports circle geometry".into() });
    };
    let n = opts.resolution.unwrap_or(n);
    let t_max = cfg.integrator.t_max;
    let r_end_sq = r * r - 2.0 * t_max;
    if r_end_sq <= 0.0 {
        return Err(CliError::Parse {
            line: 0,
            msg: format!("t_max {t_max} reaches the analytic extinction of the base circle"),
        });
    }
    // a fixed step keeps both runs on the same time grid
    let spacing_end = 2.0 * std::f64::consts::PI * r_end_sq.sqrt() / n as f64;
    let fixed_dt = 0.9 * cfg.integrator.cfl * spacing_end * spacing_end;

    let mut base_sc = orbiflow_core::flow::Scenario::new(
        format!("{}-base", cfg.name),
        orbiflow_core::mesh::DiscreteImmersion::circle(r, n),
    );
    base_sc.params.cfl = cfg.integrator.cfl;
    base_sc.params.t_max = t_max;
    base_sc.params.fixed_dt = Some(fixed_dt);
    base_sc.params.resample_every = 0;
    base_sc.snapshot_cadence = 25;
    let base = run_flow(&base_sc)?;

    let amp = cfg.submersion.as_ref().map(|s| s.z_amplitude).unwrap_or(0.0);
    let mut total_sc = orbiflow_core::flow::Scenario::new(
        format!("{}-total", cfg.name),
        orbiflow_core::flow::lift_circle_section(&model, r, n, amp)?,
    );
    total_sc.params = base_sc.params.clone();
    total_sc.snapshot_cadence = 25;
    total_sc.setting = Setting::Submersion { model: model.clone() };
    let total = run_flow(&total_sc)?;

    let rel = lift_consistency_check(&model, &total, &base)?;

    // two-solver cross-check: horizontal lift of the base flow against the
    // directly integrated total-space flow
    let lifted = lift_flow(&model, &base, &|i, b| {
        let mut p = vec![b[0], b[1]];
        p.resize(model.total_dim(), 0.0);
        let ang = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
        *p.last_mut().unwrap() = amp * (2.0 * ang).sin();
        p
    })?;
    let mut cross = 0.0f64;
    let count = lifted.snapshots.len().min(total.snapshots.len());
    let tdim = model.total_dim();
    for k in 0..count {
        let h = orbiflow_core::verify::lift_consistency_check(
            &model,
            &Trajectory {
                snapshots: vec![total.snapshots[k].clone()],
                ..total.clone()
            },
            &Trajectory {
                snapshots: vec![orbiflow_core::flow::Snapshot {
                    t: lifted.snapshots[k].t,
                    step: lifted.snapshots[k].step,
                    nodes: lifted.snapshots[k]
                        .nodes
                        .chunks(tdim)
                        .flat_map(|p| model.project(p))
                        .collect(),
                }],
                ..base.clone()
            },
        )?;
        cross = cross.max(h);
    }

    say(opts, &format!("lift-compare {}: relative Hausdorff (projected total vs base) = {rel:.3e}", cfg.name));
    say(opts, &format!("lift-compare {}: relative Hausdorff (lift vs direct total, projected) = {cross:.3e}", cfg.name));
    let pass = rel < 1e-4 && cross < 1e-4;
    say(opts, &format!("lift-consistency            {}", if pass { "PASS" } else { "FAIL" }));
    Ok(if pass { 0 } else { 1 })
}

/// Canonical re-emission, exposed for tooling and tests.
pub fn canonicalize(cfg: &ScenarioConfig) -> String {
    emit_scenario(cfg)
}
