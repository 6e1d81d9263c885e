//! Round-trip and determinism properties of the configuration, CSV, SVG and
//! snapshot formats.

use orbiflow::config::{
    emit_scenario, parse_scenario, AtlasCfg, ChartCfg, GeometryCfg, IntegratorCfg, MonitorsCfg,
    OutputsCfg, ScenarioConfig, SettingKind, SubmersionCfg, SweepCfg,
};
use orbiflow::io;
use orbiflow_core::flow::{run_flow, Scenario};
use orbiflow_core::mesh::DiscreteImmersion;
use proptest::prelude::*;

fn short_circle_traj(n: usize, t_max: f64) -> orbiflow_core::flow::Trajectory {
    let mut sc = Scenario::new("io-test", DiscreteImmersion::circle(1.0, n));
    sc.params.t_max = t_max;
    sc.snapshot_cadence = 10;
    run_flow(&sc).unwrap()
}

#[test]
fn minimal_circle_scenario_gets_defaults() {
    let cfg = parse_scenario(
        "[scenario]\nsetting = euclidean\n[geometry]\nkind = circle\nr = 1.0\n",
    )
    .unwrap();
    assert_eq!(cfg.integrator.cfl, 0.2);
    assert_eq!(cfg.integrator.resample_every, 10);
    assert_eq!(cfg.outputs.snapshot_cadence, 5);
    assert_eq!(cfg.monitors.n, 1);
}

#[test]
fn sphere_with_wrong_monitor_dim_is_rejected() {
    let err = parse_scenario(
        "[scenario]\nsetting = euclidean\n[geometry]\nkind = sphere\n[monitors]\nn = 1\n",
    )
    .unwrap_err();
    assert_eq!(err.code(), "dimension-mismatch");
}

#[test]
fn unknown_keys_are_rejected_with_line_numbers() {
    let err = parse_scenario("[geometry]\nkind = circle\nbogus = 1\n").unwrap_err();
    assert_eq!(err.code(), "unknown-key");
    assert!(format!("{err}").contains("line 3"));
}

fn arb_config() -> impl Strategy<Value = ScenarioConfig> {
    let geometry = prop_oneof![
        (0.1f64..10.0, 8usize..512).prop_map(|(r, n)| GeometryCfg::Circle { r, n }),
        (0.5f64..4.0, 0.1f64..2.0, 8usize..512)
            .prop_map(|(a, b, n)| GeometryCfg::Ellipse { a, b, n }),
        (0.1f64..5.0, 8usize..64, 4usize..64)
            .prop_map(|(r, nl, half)| GeometryCfg::Sphere { r, n_lat: nl, n_lon: 2 * half }),
    ];
    let chart = prop_oneof![
        Just(ChartCfg::Euclidean),
        Just(ChartCfg::Sphere),
        (0.01f64..0.5).prop_map(|a| ChartCfg::Warped { a }),
    ];
    (
        "[a-z][a-z0-9-]{0,12}",
        geometry,
        chart,
        proptest::option::of((2usize..7, 0.5f64..10.0, 0.01f64..0.2)),
        proptest::option::of(0.0f64..0.5),
        (1e-3f64..0.5, 1e-4f64..1e-1, 1e-14f64..1e-10, 0.01f64..20.0, 0usize..40),
        (any::<bool>(), 0.0f64..2.0, any::<bool>(), 1e-4f64..1e-1, 1e-3f64..1e-1),
        proptest::option::of(proptest::collection::vec(0.1f64..3.0, 1..5)),
    )
        .prop_map(
            |(name, geometry, chart, atlas, subm, integ, mon, sweep)| {
                let n_dim = geometry.hypersurface_dim();
                let setting = if atlas.is_some() && n_dim == 1 {
                    SettingKind::Orbifold
                } else if subm.is_some() && n_dim == 1 {
                    SettingKind::Submersion
                } else {
                    SettingKind::Euclidean
                };
                ScenarioConfig {
                    name,
                    setting: setting.clone(),
                    geometry,
                    chart,
                    atlas: if setting == SettingKind::Orbifold {
                        atlas.map(|(k, radius, margin)| AtlasCfg {
                            kind: "cone".into(),
                            k,
                            radius,
                            margin,
                        })
                    } else {
                        None
                    },
                    submersion: if setting == SettingKind::Submersion {
                        subm.map(|z_amplitude| SubmersionCfg { total_dim: 3, z_amplitude })
                    } else {
                        None
                    },
                    integrator: IntegratorCfg {
                        cfl: integ.0,
                        dt_max: integ.1,
                        dt_min: integ.2,
                        t_max: integ.3,
                        resample_every: integ.4,
                    },
                    monitors: MonitorsCfg {
                        n: n_dim,
                        convexity: mon.0,
                        l: mon.1,
                        quotient: false,
                        l_n: 0.0,
                        barrier: mon.2,
                        eps: mon.3,
                        delta: mon.4,
                        check_ln_2l: false,
                    },
                    outputs: OutputsCfg::default(),
                    sweep: sweep.map(|values| SweepCfg { key: "geometry.r".into(), values }),
                }
            },
        )
        .prop_filter("submersion needs its section", |c| {
            c.setting != SettingKind::Submersion || c.submersion.is_some()
        })
        .prop_filter("orbifold needs its atlas", |c| {
            c.setting != SettingKind::Orbifold || c.atlas.is_some()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn parse_is_inverse_of_emit(cfg in arb_config()) {
        let text = emit_scenario(&cfg);
        let parsed = parse_scenario(&text).expect("canonical emission must parse");
        prop_assert_eq!(&parsed, &cfg);
        // idempotence on its own emission
        let second = emit_scenario(&parsed);
        prop_assert_eq!(second, text);
    }
}

#[test]
fn csv_read_back_reproduces_series_exactly() {
    let traj = short_circle_traj(64, 0.03);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("series.csv");
    io::emit_series_csv(&traj, &path).unwrap();
    let (header, rows) = io::read_series_csv(&path).unwrap();
    assert_eq!(header[0], "t");
    assert_eq!(rows.len(), traj.series.len());
    for (row, rec) in rows.iter().zip(&traj.series) {
        assert_eq!(row.t, rec.t, "17 significant digits must round-trip exactly");
        assert_eq!(row.step, rec.step);
        assert_eq!(row.values[0], rec.len_or_area);
        assert_eq!(row.values[1], rec.min_norm_h);
        assert_eq!(row.values[2], rec.max_norm_h);
        assert_eq!(row.values[3], rec.min_eig_a);
    }
}

#[test]
fn csv_row_count_equals_accepted_steps() {
    // reference resolution: the first record sits one step past t = 0
    let traj = short_circle_traj(256, 0.02);
    let last_step = traj.series.last().unwrap().step;
    assert_eq!(traj.series.len() as u64, last_step);
    let first = &traj.series[0];
    assert!((first.min_norm_h - 1.0).abs() < 1e-3, "circle starts at ||H|| = 1");
}

#[test]
fn snapshot_round_trip_is_byte_identical() {
    let snap = io::SnapshotFile {
        format_version: 1,
        scenario_hash: "00ff00ff00ff00ff".into(),
        t: 0.123456789123456789,
        step: 421,
        nodes: vec![1.0, -0.333333333333333333, 2.5e-17, 7.25],
        norm_h: vec![0.9999999999999999, 1.0000000000000002],
    };
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("a.snap");
    let p2 = dir.path().join("b.snap");
    io::save_snapshot(&snap, &p1).unwrap();
    let loaded = io::load_snapshot(&p1).unwrap();
    io::save_snapshot(&loaded, &p2).unwrap();
    let b1 = std::fs::read(&p1).unwrap();
    let b2 = std::fs::read(&p2).unwrap();
    assert_eq!(b1, b2);
    assert_eq!(loaded.t, snap.t);
    assert_eq!(loaded.nodes, snap.nodes);
}

#[test]
fn svg_documents_share_structure_across_times() {
    let traj = short_circle_traj(64, 0.05);
    let dir = tempfile::tempdir().unwrap();
    let vb = io::view_box_for(&traj.immersion_at(0));
    let p1 = dir.path().join("a.svg");
    let p2 = dir.path().join("b.svg");
    io::emit_snapshot_svg(&traj.immersion_at(0), traj.snapshots[0].t, vb, &[(0.0, 0.0)], &p1)
        .unwrap();
    let k = traj.snapshots.len() - 1;
    io::emit_snapshot_svg(&traj.immersion_at(k), traj.snapshots[k].t, vb, &[(0.0, 0.0)], &p2)
        .unwrap();
    let strip = |text: &str| -> Vec<String> {
        // keep only the element structure: tag names and attribute names
        text.lines()
            .map(|l| {
                l.chars()
                    .filter(|c| c.is_ascii_alphabetic() || "<>/=".contains(*c))
                    .collect::<String>()
            })
            .collect()
    };
    let a = std::fs::read_to_string(&p1).unwrap();
    let b = std::fs::read_to_string(&p2).unwrap();
    assert_eq!(strip(&a), strip(&b), "snapshots must differ only in coordinates");
    assert!(a.contains("<svg"));
    assert!(a.contains("viewBox"));
    assert!(a.contains("<circle"), "orbifold-style marker present");
    assert!(a.contains("<polygon"));
    // 64 points in the polyline
    let pts = a.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
    assert_eq!(pts.split(' ').count(), 64);
}

#[test]
fn unit_circle_svg_viewbox_is_padded_square() {
    let im = DiscreteImmersion::circle(1.0, 256);
    let vb = io::view_box_for(&im);
    assert!((vb.w - 2.4).abs() < 1e-2);
    assert!((vb.h - 2.4).abs() < 1e-2);
    assert!((vb.x + 1.2).abs() < 1e-2);
}
