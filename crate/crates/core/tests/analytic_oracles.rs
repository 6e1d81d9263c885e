//! Cross-checks of the geometry and flow stack against independent oracles:
//! nested finite differences built from scratch for the curvature norm,
//! Richardson-extrapolated sectional curvature, closed-form extinction laws,
//! and the ambient-constant estimator on flat, symmetric and inhomogeneous
//! charts.

use approx::assert_abs_diff_eq;
use orbiflow_core::chart::MetricChart;
use orbiflow_core::flow::{run_flow, Scenario, StopReason};
use orbiflow_core::mesh::{fundamental_forms, horizontal_split, DiscreteImmersion};
use orbiflow_core::submersion::SubmersionModel;
use orbiflow_core::verify::extinction_bound_check;

/// Fully independent ∇R norm: second-order nested differences of the metric
/// with its own step ladder, sharing no code with the chart implementation.
fn nabla_r_norm_oracle(chart: &MetricChart, x: &[f64]) -> f64 {
    let d = chart.dim;
    let h_gamma = 1e-4;
    let h_r = 1.5e-3;
    let h_nr = 3e-3;

    let gamma = |p: &[f64]| -> Vec<f64> {
        // Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il - ∂_l g_ij)
        let ginv = chart.metric_inv_at(p).unwrap();
        let mut dg = Vec::with_capacity(d);
        for k in 0..d {
            let mut pp = p.to_vec();
            pp[k] += h_gamma;
            let gp = chart.metric_at(&pp);
            pp[k] -= 2.0 * h_gamma;
            let gm = chart.metric_at(&pp);
            dg.push((gp - gm) / (2.0 * h_gamma));
        }
        let mut out = vec![0.0; d * d * d];
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    let mut s = 0.0;
                    for l in 0..d {
                        s += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                    }
                    out[(k * d + i) * d + j] = 0.5 * s;
                }
            }
        }
        out
    };

    let riemann = |p: &[f64]| -> Vec<f64> {
        let g0 = gamma(p);
        let mut dgamma = Vec::with_capacity(d);
        for m in 0..d {
            let mut pp = p.to_vec();
            pp[m] += h_r;
            let gp = gamma(&pp);
            pp[m] -= 2.0 * h_r;
            let gm = gamma(&pp);
            dgamma.push(
                gp.iter().zip(gm.iter()).map(|(a, b)| (a - b) / (2.0 * h_r)).collect::<Vec<f64>>(),
            );
        }
        let at = |v: &Vec<f64>, k: usize, i: usize, j: usize| v[(k * d + i) * d + j];
        let mut r = vec![0.0; d * d * d * d];
        for l in 0..d {
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        let mut v = at(&dgamma[i], l, j, k) - at(&dgamma[j], l, i, k);
                        for a in 0..d {
                            v += at(&g0, l, i, a) * at(&g0, a, j, k)
                                - at(&g0, l, j, a) * at(&g0, a, i, k);
                        }
                        r[((l * d + i) * d + j) * d + k] = v;
                    }
                }
            }
        }
        r
    };

    let r0 = riemann(x);
    let g0 = gamma(x);
    let at3 = |v: &Vec<f64>, k: usize, i: usize, j: usize| v[(k * d + i) * d + j];
    let at4 = |v: &Vec<f64>, l: usize, i: usize, j: usize, k: usize| {
        v[((l * d + i) * d + j) * d + k]
    };

    let mut nabla = vec![0.0; d * d * d * d * d];
    for m in 0..d {
        let mut pp = x.to_vec();
        pp[m] += h_nr;
        let rp = riemann(&pp);
        pp[m] -= 2.0 * h_nr;
        let rm = riemann(&pp);
        for l in 0..d {
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        let mut v = (at4(&rp, l, i, j, k) - at4(&rm, l, i, j, k)) / (2.0 * h_nr);
                        for a in 0..d {
                            v += at3(&g0, l, m, a) * at4(&r0, a, i, j, k);
                            v -= at3(&g0, a, m, i) * at4(&r0, l, a, j, k);
                            v -= at3(&g0, a, m, j) * at4(&r0, l, i, a, k);
                            v -= at3(&g0, a, m, k) * at4(&r0, l, i, j, a);
                        }
                        nabla[(((m * d + l) * d + i) * d + j) * d + k] = v;
                    }
                }
            }
        }
    }

    let g = chart.metric_at(x);
    let gi = chart.metric_inv_at(x).unwrap();
    let mut norm2 = 0.0;
    let idx5 = |m: usize, l: usize, i: usize, j: usize, k: usize| {
        (((m * d + l) * d + i) * d + j) * d + k
    };
    for m in 0..d {
        for l in 0..d {
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        let mut low = 0.0;
                        for a in 0..d {
                            low += g[(l, a)] * nabla[idx5(m, a, i, j, k)];
                        }
                        for m2 in 0..d {
                            for l2 in 0..d {
                                for i2 in 0..d {
                                    for j2 in 0..d {
                                        for k2 in 0..d {
                                            let mut low2 = 0.0;
                                            for a in 0..d {
                                                low2 += g[(l2, a)]
                                                    * nabla[idx5(m2, a, i2, j2, k2)];
                                            }
                                            norm2 += low
                                                * gi[(m, m2)]
                                                * gi[(i, i2)]
                                                * gi[(j, j2)]
                                                * gi[(k, k2)]
                                                * gi[(l, l2)]
                                                * low2;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    norm2.max(0.0).sqrt()
}

#[test]
fn ambient_constant_is_zero_on_flat_cone_charts() {
    // regular part of a flat quotient is flat
    let chart = MetricChart::euclidean(2);
    let samples: Vec<Vec<f64>> = vec![vec![1.0, 0.2], vec![0.3, -0.8], vec![2.0, 2.0]];
    let est = chart.ambient_l_estimate(&samples).unwrap();
    assert_eq!(est.l_max, 0.0);
    assert_eq!(est.constancy_ratio, 1.0);
}

#[test]
fn ambient_constant_vanishes_on_the_round_sphere() {
    let chart = MetricChart::sphere_surface(1.0);
    let samples: Vec<Vec<f64>> =
        vec![vec![0.6, 0.0], vec![1.1, 1.0], vec![1.6, 2.5], vec![2.3, 4.0]];
    let est = chart.ambient_l_estimate(&samples).unwrap();
    assert!(est.l_max <= 1e-6, "locally symmetric space, got {}", est.l_max);
}

#[test]
fn warped_chart_nabla_r_matches_the_independent_oracle() {
    let chart = MetricChart::warped(0.1, 10.0);
    for x in [[1.0, 0.5], [1.5, 2.0]] {
        let ours = chart.curvature(&x).unwrap().nabla_r_norm;
        let oracle = nabla_r_norm_oracle(&chart, &x);
        assert!(ours > 0.0);
        assert!(
            (ours - oracle).abs() <= 0.01 * oracle.abs().max(1e-6),
            "at {x:?}: engine {ours} vs oracle {oracle}"
        );
    }
    // inhomogeneous metric: the constancy diagnostic flags variation
    let samples: Vec<Vec<f64>> = vec![vec![0.7, 0.1], vec![1.0, 1.0], vec![1.8, 2.0]];
    let est = chart.ambient_l_estimate(&samples).unwrap();
    assert!(est.l_max > 0.0);
    assert!(est.constancy_ratio > 1.01, "diagnostic should exceed 1, got {}", est.constancy_ratio);
}

#[test]
fn sphere_sectional_curvature_by_richardson_extrapolated_oracle() {
    // second-order differences at h and h/2, Richardson-combined
    let chart = MetricChart::sphere_surface(1.0);
    let x = [0.9, 0.4];
    let sec = |h: f64| -> f64 {
        // K = R_1212 / det g via nested second-order stencils at step h
        let gamma = |p: &[f64]| -> Vec<f64> {
            let d = 2;
            let ginv = chart.metric_inv_at(p).unwrap();
            let mut dg = Vec::new();
            for k in 0..d {
                let mut pp = p.to_vec();
                pp[k] += h;
                let gp = chart.metric_at(&pp);
                pp[k] -= 2.0 * h;
                let gm = chart.metric_at(&pp);
                dg.push((gp - gm) / (2.0 * h));
            }
            let mut out = vec![0.0; 8];
            for k in 0..d {
                for i in 0..d {
                    for j in 0..d {
                        let mut s = 0.0;
                        for l in 0..d {
                            s += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                        }
                        out[(k * 2 + i) * 2 + j] = 0.5 * s;
                    }
                }
            }
            out
        };
        let g0 = gamma(&x);
        let mut d0 = vec![0.0; 8];
        let mut d1 = vec![0.0; 8];
        {
            let mut pp = x.to_vec();
            pp[0] += h;
            let gp = gamma(&pp);
            pp[0] -= 2.0 * h;
            let gm = gamma(&pp);
            for i in 0..8 {
                d0[i] = (gp[i] - gm[i]) / (2.0 * h);
            }
            let mut pp = x.to_vec();
            pp[1] += h;
            let gp = gamma(&pp);
            pp[1] -= 2.0 * h;
            let gm = gamma(&pp);
            for i in 0..8 {
                d1[i] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        let at = |v: &Vec<f64>, k: usize, i: usize, j: usize| v[(k * 2 + i) * 2 + j];
        // R^l_{121} components -> lowered R_1212 = g_{l2} R^l_{121}? use
        // R(e1,e2)e2 paired with e1: R^l_{122}, lowered against e1.
        let mut rup = [0.0; 2];
        for l in 0..2 {
            let mut v = at(&d0, l, 1, 1) - at(&d1, l, 0, 1);
            for a in 0..2 {
                v += at(&g0, l, 0, a) * at(&g0, a, 1, 1) - at(&g0, l, 1, a) * at(&g0, a, 0, 1);
            }
            rup[l] = v;
        }
        let g = chart.metric_at(&x);
        let r_low = g[(0, 0)] * rup[0] + g[(0, 1)] * rup[1];
        let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(0, 1)];
        r_low / det
    };
    let coarse = sec(2e-3);
    let fine = sec(1e-3);
    let richardson = (4.0 * fine - coarse) / 3.0;
    assert_abs_diff_eq!(richardson, 1.0, epsilon = 1e-6);
    let engine = chart.curvature(&x).unwrap().sectional(0, 1);
    assert_abs_diff_eq!(engine, richardson, epsilon = 1e-6);
}

#[test]
fn ellipse_extinction_time_is_far_below_the_bound() {
    // min curvature b/a² = 0.25 gives the bound 1/(2·0.25²) = 8; the
    // enclosed-area law puts the actual extinction near ab/2 = 1.
    let mut sc = Scenario::new("ellipse", DiscreteImmersion::ellipse(2.0, 1.0, 128));
    sc.params.t_max = 4.0;
    sc.snapshot_cadence = 4000;
    let traj = run_flow(&sc).unwrap();
    assert_eq!(traj.stop, StopReason::ExtinctionProxy);
    assert_abs_diff_eq!(traj.initial_min_norm_h, 0.25, epsilon = 2.5e-3);
    let check = extinction_bound_check(&traj, 1, 0.01).unwrap();
    assert_abs_diff_eq!(check.bound, 8.0, epsilon = 0.2);
    assert!(check.pass);
    assert!(
        check.measured_t < 0.25 * check.bound,
        "expected large slack, got T = {} vs bound {}",
        check.measured_t,
        check.bound
    );
    // curve shrinks to a round point: area law T = ab/2
    assert_abs_diff_eq!(check.measured_t, 1.0, epsilon = 0.05);
}

#[test]
fn submersion_isometry_holds_at_a_hundred_random_points() {
    let model = SubmersionModel::screw(1.0, 50.0);
    let mut seed = 0xabcdef12345u64;
    let mut rnd = move || {
        seed ^= seed << 13;
        seed ^= seed >> 7;
        seed ^= seed << 17;
        (seed >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let samples: Vec<Vec<f64>> = (0..100)
        .map(|_| {
            // keep a margin from the axis where the base chart degenerates
            let x = 0.5 + 2.0 * (rnd() + 1.0);
            vec![x, 2.0 * rnd(), 3.0 * rnd()]
        })
        .collect();
    model.validate(&samples, 10).unwrap();
}

#[test]
fn horizontal_split_orthogonality_at_a_hundred_nodes() {
    let model = SubmersionModel::translation(3, 1);
    let n = 128;
    let nodes: Vec<f64> = (0..n)
        .flat_map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            [(1.0 + 0.2 * (3.0 * t).cos()) * t.cos(), (1.0 + 0.2 * (3.0 * t).cos()) * t.sin(),
             0.1 * (2.0 * t).sin()]
        })
        .collect();
    let im = DiscreteImmersion::new_section_curve(&model, nodes).unwrap();
    let cache = fundamental_forms(&im).unwrap();
    let c = cache.as_curve().unwrap();
    for node in 0..100 {
        let (hf, vf) = horizontal_split(&model, &im, c, node).unwrap();
        assert_eq!(hf.len() + vf.len(), 2, "dim H + dim V = dim M");
        for h in &hf {
            for v in &vf {
                let ip: f64 = h.iter().zip(v).map(|(a, b)| a * b).sum();
                assert_abs_diff_eq!(ip, 0.0, epsilon = 1e-12);
            }
            let norm: f64 = h.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
        }
    }
}

#[test]
fn sphere_extinction_follows_the_radius_law() {
    // quick coarse-grid version of the graph flow: r(t) = sqrt(1 - 4t)
    let mut sc = Scenario::new("sphere-16", DiscreteImmersion::sphere_graph(1.0, 16, 32).unwrap());
    sc.params.t_max = 0.3;
    sc.snapshot_cadence = 20;
    let traj = run_flow(&sc).unwrap();
    for snap in &traj.snapshots {
        let expect = (1.0f64 - 4.0 * snap.t).max(0.0).sqrt();
        if expect < 0.2 {
            break;
        }
        for &r in &snap.nodes {
            assert_abs_diff_eq!(r, expect, epsilon = 1e-6 + 1e-3 * expect);
        }
    }
}
