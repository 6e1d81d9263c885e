//! Orbifold charts presented as global quotients of a flat cover chart by a
//! finite isometry group, with deterministic lifts into a fundamental domain
//! and singular-set bookkeeping.
//!
//! Built-in atlases: the cone R²/Z_k (rotations by 2πj/k about the origin,
//! apex singular of order k) and the plane (trivial group).  Invariant curves
//! are represented by their lift in the cover chart; the flow acts on the
//! lift and re-projects for reporting.

use crate::chart::MetricChart;
use crate::error::{Error, Result};

/// Affine isometry x -> Q x + b of a cover chart.
#[derive(Clone, Debug)]
pub struct Isometry {
    pub dim: usize,
    /// Row-major orthogonal matrix.
    pub rot: Vec<f64>,
    pub trans: Vec<f64>,
}

impl Isometry {
    pub fn identity(dim: usize) -> Self {
        let mut rot = vec![0.0; dim * dim];
        for i in 0..dim {
            rot[i * dim + i] = 1.0;
        }
        Isometry { dim, rot, trans: vec![0.0; dim] }
    }

    pub fn rotation2(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Isometry { dim: 2, rot: vec![c, -s, s, c], trans: vec![0.0, 0.0] }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = self.trans.clone();
        for i in 0..d {
            for j in 0..d {
                out[i] += self.rot[i * d + j] * x[j];
            }
        }
        out
    }

    /// Differential of the isometry (the rotation part) applied to a vector.
    pub fn apply_linear(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for i in 0..d {
            for j in 0..d {
                out[i] += self.rot[i * d + j] * v[j];
            }
        }
        out
    }

    pub fn compose(&self, other: &Isometry) -> Isometry {
        // (self ∘ other)(x) = Q1 (Q2 x + b2) + b1
        let d = self.dim;
        let mut rot = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    rot[i * d + j] += self.rot[i * d + k] * other.rot[k * d + j];
                }
            }
        }
        let mut trans = self.trans.clone();
        for i in 0..d {
            for j in 0..d {
                trans[i] += self.rot[i * d + j] * other.trans[j];
            }
        }
        Isometry { dim: d, rot, trans }
    }

    pub fn inverse(&self) -> Isometry {
        let d = self.dim;
        let mut rot = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                rot[i * d + j] = self.rot[j * d + i];
            }
        }
        let mut trans = vec![0.0; d];
        for i in 0..d {
            for j in 0..d {
                trans[i] -= rot[i * d + j] * self.trans[j];
            }
        }
        Isometry { dim: d, rot, trans }
    }

    pub fn approx_eq(&self, other: &Isometry, tol: f64) -> bool {
        self.rot.iter().zip(&other.rot).all(|(a, b)| (a - b).abs() < tol)
            && self.trans.iter().zip(&other.trans).all(|(a, b)| (a - b).abs() < tol)
    }
}

/// One orbifold chart: an open set presented as cover/Γ.
#[derive(Clone)]
pub struct OrbifoldChart {
    pub id: String,
    pub cover_chart: MetricChart,
    pub group: Vec<Isometry>,
    /// Radius of the covered disc (lifts outside are NotInChart).
    pub radius: f64,
    /// Cyclic order for cone charts, 1 for the plane.
    pub cone_order: usize,
}

/// Chart-to-chart compatibility map on an overlap.
#[derive(Clone)]
pub struct Transition {
    pub from: String,
    pub to: String,
    pub map: Isometry,
}

#[derive(Clone)]
pub struct OrbifoldAtlas {
    pub charts: Vec<OrbifoldChart>,
    pub transitions: Vec<Transition>,
}

impl std::fmt::Debug for OrbifoldAtlas {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ids: Vec<&str> = self.charts.iter().map(|c| c.id.as_str()).collect();
        f.debug_struct("OrbifoldAtlas").field("charts", &ids).finish_non_exhaustive()
    }
}

/// Cone atlas R²/Z_k on a flat disc of the given radius.
pub fn make_cone_atlas(k: usize, radius: f64) -> Result<OrbifoldAtlas> {
    if k < 2 {
        return Err(Error::BadOrder(k));
    }
    let group = (0..k)
        .map(|j| Isometry::rotation2(2.0 * std::f64::consts::PI * j as f64 / k as f64))
        .collect();
    let chart = OrbifoldChart {
        id: format!("cone-z{k}"),
        cover_chart: MetricChart::euclidean(2),
        group,
        radius,
        cone_order: k,
    };
    Ok(OrbifoldAtlas { charts: vec![chart], transitions: vec![] })
}

/// Plane atlas: trivial group, no singular points.
pub fn make_plane_atlas(radius: f64) -> OrbifoldAtlas {
    let chart = OrbifoldChart {
        id: "plane".into(),
        cover_chart: MetricChart::euclidean(2),
        group: vec![Isometry::identity(2)],
        radius,
        cone_order: 1,
    };
    OrbifoldAtlas { charts: vec![chart], transitions: vec![] }
}

impl OrbifoldChart {
    /// Sector angle of the fundamental domain [0, 2π/k).
    pub fn sector(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.cone_order as f64
    }

    /// Canonical orbit representative: group image with angular coordinate in
    /// the half-open fundamental sector.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        if self.cone_order == 1 {
            return x.to_vec();
        }
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        if r == 0.0 {
            return vec![0.0, 0.0];
        }
        let sector = self.sector();
        let ang = x[1].atan2(x[0]).rem_euclid(2.0 * std::f64::consts::PI);
        let canon = ang.rem_euclid(sector);
        vec![r * canon.cos(), r * canon.sin()]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x[..2].iter().map(|v| v * v).sum::<f64>().sqrt() <= self.radius
    }

    /// Stabilizer order of the orbit through x.
    pub fn stabilizer_order(&self, x: &[f64]) -> usize {
        let scale = self.radius.max(1.0);
        self.group
            .iter()
            .filter(|g| {
                let y = g.apply(x);
                y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
                    < 1e-12 * scale
            })
            .count()
    }

    /// Finite-group check: closure under composition and inverses.
    pub fn check_group(&self) -> Result<()> {
        let tol = 1e-10;
        let in_group =
            |iso: &Isometry| self.group.iter().any(|g| g.approx_eq(iso, tol));
        for a in &self.group {
            if !in_group(&a.inverse()) {
                return Err(Error::ScenarioInvalid(format!(
                    "group of chart '{}' is missing an inverse",
                    self.id
                )));
            }
            for b in &self.group {
                if !in_group(&a.compose(b)) {
                    return Err(Error::ScenarioInvalid(format!(
                        "group of chart '{}' is not closed under composition",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Metric preservation of every group element at the sample points:
    /// g(γx)(dγ u, dγ v) = g(x)(u, v) within 1e-10.
    pub fn check_isometries(&self, samples: &[Vec<f64>]) -> Result<()> {
        let dirs = [[1.0, 0.0], [0.0, 1.0], [0.6, -0.8]];
        for x in samples {
            let g0 = self.cover_chart.metric_at(x);
            for gamma in &self.group {
                let gx = gamma.apply(x);
                let g1 = self.cover_chart.metric_at(&gx);
                for u in &dirs {
                    for v in &dirs {
                        let du = gamma.apply_linear(u);
                        let dv = gamma.apply_linear(v);
                        let lhs: f64 = (0..2)
                            .flat_map(|i| (0..2).map(move |j| (i, j)))
                            .map(|(i, j)| g1[(i, j)] * du[i] * dv[j])
                            .sum();
                        let rhs: f64 = (0..2)
                            .flat_map(|i| (0..2).map(move |j| (i, j)))
                            .map(|(i, j)| g0[(i, j)] * u[i] * v[j])
                            .sum();
                        if (lhs - rhs).abs() > 1e-10 * (1.0 + rhs.abs()) {
                            return Err(Error::ScenarioInvalid(format!(
                                "group element of chart '{}' does not preserve the metric",
                                self.id
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Max deviation of a closed curve (packed 2d nodes) from exact group
    /// invariance, matching each group image against the node set by the
    /// best circular shift.
    pub fn curve_invariance_deviation(&self, nodes: &[f64]) -> f64 {
        let n = nodes.len() / 2;
        let mut worst = 0.0f64;
        for gamma in &self.group {
            let (_, dev) = best_shift(self, gamma, nodes, n);
            worst = worst.max(dev);
        }
        worst
    }

    /// Group-average the curve: every node is replaced by the mean of its
    /// matched orbit images.  Returns the symmetrized nodes and the pre-fix
    /// deviation.
    pub fn symmetrize_curve(&self, nodes: &[f64]) -> (Vec<f64>, f64) {
        let n = nodes.len() / 2;
        let mut acc = vec![0.0f64; nodes.len()];
        let mut worst = 0.0f64;
        for gamma in &self.group {
            let (shift, dev) = best_shift(self, gamma, nodes, n);
            worst = worst.max(dev);
            for m in 0..n {
                let src = (m + n - shift) % n;
                let img = gamma.apply(&nodes[2 * src..2 * src + 2]);
                acc[2 * m] += img[0];
                acc[2 * m + 1] += img[1];
            }
        }
        let k = self.group.len() as f64;
        for v in &mut acc {
            *v /= k;
        }
        (acc, worst)
    }
}

/// Best circular shift aligning γ(nodes) with nodes, and the residual
/// max-node distance under that shift.
fn best_shift(chart: &OrbifoldChart, gamma: &Isometry, nodes: &[f64], n: usize) -> (usize, f64) {
    let _ = chart;
    let rotated: Vec<f64> =
        (0..n).flat_map(|i| gamma.apply(&nodes[2 * i..2 * i + 2])).collect();
    let mut best = (0usize, f64::INFINITY);
    for s in 0..n {
        let mut sum = 0.0;
        for i in 0..n {
            let j = (i + s) % n;
            let dx = rotated[2 * i] - nodes[2 * j];
            let dy = rotated[2 * i + 1] - nodes[2 * j + 1];
            sum += dx * dx + dy * dy;
            if sum >= best.1 {
                break;
            }
        }
        if sum < best.1 {
            best = (s, sum);
        }
    }
    let s = best.0;
    let mut devmax = 0.0f64;
    for i in 0..n {
        let j = (i + s) % n;
        let dx = rotated[2 * i] - nodes[2 * j];
        let dy = rotated[2 * i + 1] - nodes[2 * j + 1];
        devmax = devmax.max((dx * dx + dy * dy).sqrt());
    }
    (s, devmax)
}

impl OrbifoldAtlas {
    pub fn chart(&self, id: &str) -> Result<&OrbifoldChart> {
        self.charts
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::NotInChart { chart: id.into(), point: vec![] })
    }

    pub fn single_chart(&self) -> &OrbifoldChart {
        &self.charts[0]
    }

    /// Deterministic local lift of an orbit point into the fundamental
    /// domain of the named chart.
    pub fn local_lift(&self, p: &[f64], chart_id: &str) -> Result<Vec<f64>> {
        let chart = self.chart(chart_id)?;
        if !chart.contains(p) {
            return Err(Error::NotInChart { chart: chart_id.into(), point: p.to_vec() });
        }
        Ok(chart.project(p))
    }

    /// Is the orbit point singular, and what is its local group order?
    pub fn is_singular(&self, p: &[f64]) -> Result<(bool, usize)> {
        for chart in &self.charts {
            if chart.contains(p) {
                let lift = chart.project(p);
                let order = chart.stabilizer_order(&lift);
                return Ok((order > 1, order));
            }
        }
        Err(Error::NotInChart { chart: "<any>".into(), point: p.to_vec() })
    }

    /// Validate group axioms, isometry property and transition compatibility.
    pub fn validate(&self, samples: &[Vec<f64>]) -> Result<()> {
        for chart in &self.charts {
            chart.check_group()?;
            chart.check_isometries(samples)?;
        }
        for tr in &self.transitions {
            let from = self.chart(&tr.from)?;
            let to = self.chart(&tr.to)?;
            for x in samples {
                if !from.contains(x) {
                    continue;
                }
                let y = tr.map.apply(x);
                if !to.contains(&y) {
                    continue;
                }
                // metric preservation of the transition on the overlap
                let g0 = from.cover_chart.metric_at(x);
                let g1 = to.cover_chart.metric_at(&y);
                for i in 0..2 {
                    for j in 0..2 {
                        let mut lhs = 0.0;
                        for a in 0..2 {
                            for b in 0..2 {
                                lhs += g1[(a, b)]
                                    * tr.map.rot[a * 2 + i]
                                    * tr.map.rot[b * 2 + j];
                            }
                        }
                        if (lhs - g0[(i, j)]).abs() > 1e-10 * (1.0 + g0[(i, j)].abs()) {
                            return Err(Error::ScenarioInvalid(format!(
                                "transition {} -> {} is not metric-preserving",
                                tr.from, tr.to
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
