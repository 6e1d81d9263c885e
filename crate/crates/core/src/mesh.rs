//! Discrete immersed hypersurfaces: periodic curves in 2d charts, invariant
//! cylinder sections in translation models, and radial graphs over the
//! sphere, together with their fundamental forms and surface operators.
//!
//! Curves use 4th-order centered differences in a periodic parameter.  Radial
//! graphs use a cell-centered latitude grid (no node sits on a pole) with
//! centered stencils closed across the poles by the identification
//! F(-θ, φ) = ±F(θ, φ+π); on an exact sphere every derivative of the radius
//! field is then a difference of equal numbers, so the fundamental forms are
//! exact.

use crate::chart::MetricChart;
use crate::error::{Error, Result};
use crate::submersion::SubmersionModel;
use std::sync::Arc;

/// Immersion flavor.  `SectionCurve` is one point per fiber of a translation
/// model: the curve generates an invariant hypersurface (curve x fibers) and
/// all reported quantities are those of that hypersurface.
#[derive(Clone)]
pub enum ImmersionKind {
    PeriodicCurve,
    SectionCurve { vertical: Vec<Vec<f64>> },
    RadialGraph { grid: Arc<GraphGrid> },
}

/// A discretized hypersurface.
#[derive(Clone)]
pub struct DiscreteImmersion {
    pub kind: ImmersionKind,
    pub chart: MetricChart,
    /// Packed degrees of freedom: curve coordinates (n * dim) or radii.
    pub nodes: Vec<f64>,
    /// Global normal sign: +1/-1 so that convex model shapes have trace(A) >= 0
    /// (inward normal).  Fixed at construction, kept along a flow.
    pub orient: f64,
}

impl std::fmt::Debug for DiscreteImmersion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.kind {
            ImmersionKind::PeriodicCurve => "periodic-curve",
            ImmersionKind::SectionCurve { .. } => "section-curve",
            ImmersionKind::RadialGraph { .. } => "radial-graph",
        };
        f.debug_struct("DiscreteImmersion")
            .field("kind", &kind)
            .field("nodes", &self.n_nodes())
            .field("chart", &self.chart.name)
            .finish_non_exhaustive()
    }
}

/// Latitude-longitude grid over S² with precomputed direction tables.
pub struct GraphGrid {
    pub n_lat: usize,
    pub n_lon: usize,
    pub dtheta: f64,
    pub dphi: f64,
    pub theta: Vec<f64>,
    pub omega: Vec<[f64; 3]>,
    pub omega_th: Vec<[f64; 3]>,
    pub omega_ph: Vec<[f64; 3]>,
    pub omega_thth: Vec<[f64; 3]>,
    pub omega_thph: Vec<[f64; 3]>,
    pub omega_phph: Vec<[f64; 3]>,
}

impl GraphGrid {
    pub fn new(n_lat: usize, n_lon: usize) -> Result<Arc<GraphGrid>> {
        if n_lat < 8 {
            return Err(Error::ScenarioInvalid(format!(
                "radial graph needs at least 8 latitude rows, got {n_lat}"
            )));
        }
        if n_lon < 8 || n_lon % 2 != 0 {
            return Err(Error::ScenarioInvalid(format!(
                "radial graph needs an even longitude count >= 8, got {n_lon}"
            )));
        }
        let dtheta = std::f64::consts::PI / n_lat as f64;
        let dphi = 2.0 * std::f64::consts::PI / n_lon as f64;
        let n = n_lat * n_lon;
        let mut grid = GraphGrid {
            n_lat,
            n_lon,
            dtheta,
            dphi,
            theta: vec![0.0; n_lat],
            omega: vec![[0.0; 3]; n],
            omega_th: vec![[0.0; 3]; n],
            omega_ph: vec![[0.0; 3]; n],
            omega_thth: vec![[0.0; 3]; n],
            omega_thph: vec![[0.0; 3]; n],
            omega_phph: vec![[0.0; 3]; n],
        };
        for i in 0..n_lat {
            let th = (i as f64 + 0.5) * dtheta;
            grid.theta[i] = th;
            let (st, ct) = th.sin_cos();
            for j in 0..n_lon {
                let ph = j as f64 * dphi;
                let (sp, cp) = ph.sin_cos();
                let idx = i * n_lon + j;
                grid.omega[idx] = [st * cp, st * sp, ct];
                grid.omega_th[idx] = [ct * cp, ct * sp, -st];
                grid.omega_ph[idx] = [-st * sp, st * cp, 0.0];
                grid.omega_thth[idx] = [-st * cp, -st * sp, -ct];
                grid.omega_thph[idx] = [-ct * sp, ct * cp, 0.0];
                grid.omega_phph[idx] = [-st * cp, -st * sp, 0.0];
            }
        }
        Ok(Arc::new(grid))
    }

    /// Value of a scalar row-major field at (i, j) with across-pole closure:
    /// F(-θ, φ) = parity * F(θ, φ+π), longitudes periodic.
    #[inline]
    pub fn at(&self, f: &[f64], i: isize, j: isize, parity: f64) -> f64 {
        let nlat = self.n_lat as isize;
        let nlon = self.n_lon as isize;
        let (ii, jj, sign) = if i < 0 {
            (-1 - i, j + nlon / 2, parity)
        } else if i >= nlat {
            (2 * nlat - 1 - i, j + nlon / 2, parity)
        } else {
            (i, j, 1.0)
        };
        let jj = jj.rem_euclid(nlon);
        sign * f[(ii * nlon + jj) as usize]
    }

    /// Second-order centered first derivatives of a scalar field.
    pub fn d_theta(&self, f: &[f64], parity: f64) -> Vec<f64> {
        let (nlat, nlon) = (self.n_lat, self.n_lon);
        let mut out = vec![0.0; nlat * nlon];
        for i in 0..nlat as isize {
            for j in 0..nlon as isize {
                out[(i as usize) * nlon + j as usize] =
                    (self.at(f, i + 1, j, parity) - self.at(f, i - 1, j, parity))
                        / (2.0 * self.dtheta);
            }
        }
        out
    }

    pub fn d_phi(&self, f: &[f64]) -> Vec<f64> {
        let (nlat, nlon) = (self.n_lat, self.n_lon);
        let mut out = vec![0.0; nlat * nlon];
        for i in 0..nlat {
            for j in 0..nlon {
                let jp = (j + 1) % nlon;
                let jm = (j + nlon - 1) % nlon;
                out[i * nlon + j] = (f[i * nlon + jp] - f[i * nlon + jm]) / (2.0 * self.dphi);
            }
        }
        out
    }

    pub fn d2_theta(&self, f: &[f64], parity: f64) -> Vec<f64> {
        let (nlat, nlon) = (self.n_lat, self.n_lon);
        let mut out = vec![0.0; nlat * nlon];
        let h2 = self.dtheta * self.dtheta;
        for i in 0..nlat as isize {
            for j in 0..nlon as isize {
                out[(i as usize) * nlon + j as usize] = (self.at(f, i + 1, j, parity)
                    - 2.0 * self.at(f, i, j, parity)
                    + self.at(f, i - 1, j, parity))
                    / h2;
            }
        }
        out
    }

    pub fn d2_phi(&self, f: &[f64]) -> Vec<f64> {
        let (nlat, nlon) = (self.n_lat, self.n_lon);
        let mut out = vec![0.0; nlat * nlon];
        let h2 = self.dphi * self.dphi;
        for i in 0..nlat {
            for j in 0..nlon {
                let jp = (j + 1) % nlon;
                let jm = (j + nlon - 1) % nlon;
                out[i * nlon + j] =
                    (f[i * nlon + jp] - 2.0 * f[i * nlon + j] + f[i * nlon + jm]) / h2;
            }
        }
        out
    }

    pub fn d2_theta_phi(&self, f: &[f64], parity: f64) -> Vec<f64> {
        self.d_phi(&self.d_theta(f, parity))
    }
}

/// Per-node geometry of a curve (or cylinder section).  `kappa` is the trace
/// of the shape operator with respect to the oriented normal; on convex
/// shapes it equals ||H||.
#[derive(Clone)]
pub struct CurveCache {
    pub n: usize,
    pub du: f64,
    /// Induced metric g_uu (sections: horizontal part only).
    pub g: Vec<f64>,
    /// Second fundamental form h_uu.
    pub h: Vec<f64>,
    /// Shape operator (single eigenvalue) A = h/g; equals the scalar mean
    /// curvature.
    pub kappa: Vec<f64>,
    pub xi: Vec<[f64; 3]>,
    pub x_u: Vec<[f64; 3]>,
    /// Mean curvature vector kappa * xi in chart components.
    pub hvec: Vec<[f64; 3]>,
    pub length: f64,
}

/// Per-node geometry of a radial graph.
#[derive(Clone)]
pub struct GraphCache {
    pub n_lat: usize,
    pub n_lon: usize,
    /// First fundamental form, packed [g_θθ, g_θφ, g_φφ].
    pub g: Vec<[f64; 3]>,
    pub h: Vec<[f64; 3]>,
    /// Shape operator, row-major 2x2.
    pub a: Vec<[f64; 4]>,
    pub norm_h: Vec<f64>,
    pub min_eig_a: Vec<f64>,
    pub xi: Vec<[f64; 3]>,
    pub pos: Vec<[f64; 3]>,
    /// <ω, ξ>, used to convert normal speed into radial speed.
    pub omega_dot_xi: Vec<f64>,
    pub area: f64,
}

#[derive(Clone)]
pub enum GeometryCache {
    Curve(CurveCache),
    Graph(GraphCache),
}

impl GeometryCache {
    pub fn node_count(&self) -> usize {
        match self {
            GeometryCache::Curve(c) => c.n,
            GeometryCache::Graph(c) => c.n_lat * c.n_lon,
        }
    }

    pub fn norm_h(&self, i: usize) -> f64 {
        match self {
            GeometryCache::Curve(c) => c.kappa[i],
            GeometryCache::Graph(c) => c.norm_h[i],
        }
    }

    pub fn min_eig_a(&self, i: usize) -> f64 {
        match self {
            GeometryCache::Curve(c) => c.kappa[i],
            GeometryCache::Graph(c) => c.min_eig_a[i],
        }
    }

    pub fn len_or_area(&self) -> f64 {
        match self {
            GeometryCache::Curve(c) => c.length,
            GeometryCache::Graph(c) => c.area,
        }
    }

    pub fn max_abs_shape(&self) -> f64 {
        let mut m = 0.0f64;
        match self {
            GeometryCache::Curve(c) => {
                for &k in &c.kappa {
                    m = m.max(k.abs());
                }
            }
            GeometryCache::Graph(c) => {
                for a in &c.a {
                    let e = eig2(a);
                    m = m.max(e.0.abs()).max(e.1.abs());
                }
            }
        }
        m
    }

    pub fn as_curve(&self) -> Result<&CurveCache> {
        match self {
            GeometryCache::Curve(c) => Ok(c),
            _ => Err(Error::UnsupportedKind("expected a curve cache".into())),
        }
    }

    pub fn as_graph(&self) -> Result<&GraphCache> {
        match self {
            GeometryCache::Graph(c) => Ok(c),
            _ => Err(Error::UnsupportedKind("expected a graph cache".into())),
        }
    }
}

/// Eigenvalues of a 2x2 matrix with real spectrum (g^{-1} h is similar to a
/// symmetric matrix), smallest first.
pub fn eig2(a: &[f64; 4]) -> (f64, f64) {
    let tr = a[0] + a[3];
    let det = a[0] * a[3] - a[1] * a[2];
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    ((tr - disc) / 2.0, (tr + disc) / 2.0)
}

// 4th-order periodic stencils for curve fields.
#[inline]
fn d1_weights() -> [f64; 5] {
    [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0]
}

#[inline]
fn d2_weights() -> [f64; 5] {
    [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0]
}

/// 4th-order first derivative of a periodic scalar field.
pub fn d1_periodic(f: &[f64], du: f64) -> Vec<f64> {
    let n = f.len();
    let w = d1_weights();
    (0..n)
        .map(|i| {
            let mut s = 0.0;
            for (o, wk) in (-2i64..=2).zip(w.iter()) {
                s += wk * f[(i as i64 + o).rem_euclid(n as i64) as usize];
            }
            s / du
        })
        .collect()
}

/// 4th-order second derivative of a periodic scalar field.
pub fn d2_periodic(f: &[f64], du: f64) -> Vec<f64> {
    let n = f.len();
    let w = d2_weights();
    (0..n)
        .map(|i| {
            let mut s = 0.0;
            for (o, wk) in (-2i64..=2).zip(w.iter()) {
                s += wk * f[(i as i64 + o).rem_euclid(n as i64) as usize];
            }
            s / (du * du)
        })
        .collect()
}

/// Unwrapped copy of closed-curve coordinates plus the per-axis winding
/// offsets, so stencils can reach across periodic chart seams.
pub struct UnwrappedCurve {
    pub coords: Vec<f64>,
    pub winding: Vec<f64>,
    pub n: usize,
    pub dim: usize,
}

impl UnwrappedCurve {
    pub fn new(chart: &MetricChart, nodes: &[f64]) -> Self {
        let dim = chart.dim;
        let n = nodes.len() / dim;
        let mut coords = nodes.to_vec();
        for k in 0..dim {
            if !chart.domain.periodic[k] {
                continue;
            }
            let period = chart.domain.period(k);
            for i in 1..n {
                let prev = coords[(i - 1) * dim + k];
                let cur = coords[i * dim + k];
                coords[i * dim + k] = cur - ((cur - prev) / period).round() * period;
            }
        }
        let mut winding = vec![0.0; dim];
        for k in 0..dim {
            if chart.domain.periodic[k] {
                let period = chart.domain.period(k);
                let jump = coords[(n - 1) * dim + k] - coords[k];
                winding[k] = (jump / period).round() * period;
            }
        }
        UnwrappedCurve { coords, winding, n, dim }
    }

    /// Coordinate of node `i` (any integer), shifted by winding when the
    /// index wraps around the curve.
    #[inline]
    pub fn coord(&self, i: i64, k: usize) -> f64 {
        let n = self.n as i64;
        let wraps = i.div_euclid(n);
        let idx = i.rem_euclid(n) as usize;
        self.coords[idx * self.dim + k] + wraps as f64 * self.winding[k]
    }

    pub fn point(&self, i: i64) -> Vec<f64> {
        (0..self.dim).map(|k| self.coord(i, k)).collect()
    }
}

impl DiscreteImmersion {
    pub fn n_nodes(&self) -> usize {
        match &self.kind {
            ImmersionKind::RadialGraph { grid } => grid.n_lat * grid.n_lon,
            _ => self.nodes.len() / self.chart.dim,
        }
    }

    pub fn du(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.n_nodes() as f64
    }

    /// Closed curve in a 2d chart from packed node coordinates; the normal
    /// orientation is fixed so that the total curvature is nonnegative.
    pub fn new_periodic_curve(chart: MetricChart, nodes: Vec<f64>) -> Result<Self> {
        if chart.dim != 2 {
            return Err(Error::UnsupportedKind(
                "periodic curves need a 2d chart".into(),
            ));
        }
        let mut im =
            DiscreteImmersion { kind: ImmersionKind::PeriodicCurve, chart, nodes, orient: 1.0 };
        im.fix_orientation()?;
        im.quality_check()?;
        Ok(im)
    }

    /// Cylinder section: one 3d point per fiber of a translation model with a
    /// 2d base.  The curve generates the invariant hypersurface.
    pub fn new_section_curve(model: &SubmersionModel, nodes: Vec<f64>) -> Result<Self> {
        if model.base_dim() != 2
            || model.kind != crate::submersion::SubmersionKind::TranslationGroup
        {
            return Err(Error::UnsupportedKind(
                "section curves need a translation model with a 2d base".into(),
            ));
        }
        let vertical = model.vertical_frame(&nodes[..model.total_dim()]);
        for v in &vertical {
            if v[0].abs() > 1e-12 || v[1].abs() > 1e-12 {
                return Err(Error::UnsupportedKind(
                    "section curves expect the vertical frame along the trailing axes".into(),
                ));
            }
        }
        let mut im = DiscreteImmersion {
            kind: ImmersionKind::SectionCurve { vertical },
            chart: model.total_chart.clone(),
            nodes,
            orient: 1.0,
        };
        im.fix_orientation()?;
        im.quality_check()?;
        Ok(im)
    }

    /// Radial graph r(θ, φ) over the cell-centered latitude-longitude grid.
    pub fn new_radial_graph(radii: Vec<f64>, n_lat: usize, n_lon: usize) -> Result<Self> {
        let grid = GraphGrid::new(n_lat, n_lon)?;
        if radii.len() != n_lat * n_lon {
            return Err(Error::ShapeMismatch {
                expected: format!("{} radii", n_lat * n_lon),
                got: format!("{}", radii.len()),
            });
        }
        let im = DiscreteImmersion {
            kind: ImmersionKind::RadialGraph { grid },
            chart: MetricChart::euclidean(3),
            nodes: radii,
            orient: 1.0,
        };
        im.quality_check()?;
        Ok(im)
    }

    pub fn circle(r: f64, n: usize) -> Self {
        let nodes = (0..n)
            .flat_map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                [r * a.cos(), r * a.sin()]
            })
            .collect();
        DiscreteImmersion::new_periodic_curve(MetricChart::euclidean(2), nodes)
            .expect("circle is a valid immersion")
    }

    pub fn ellipse(a: f64, b: f64, n: usize) -> Self {
        let nodes = (0..n)
            .flat_map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                [a * t.cos(), b * t.sin()]
            })
            .collect();
        DiscreteImmersion::new_periodic_curve(MetricChart::euclidean(2), nodes)
            .expect("ellipse is a valid immersion")
    }

    /// Curve given by a polar radius function r(θ) about the origin.
    pub fn polar_curve(chart: MetricChart, f: impl Fn(f64) -> f64, n: usize) -> Result<Self> {
        let nodes = (0..n)
            .flat_map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                let r = f(t);
                [r * t.cos(), r * t.sin()]
            })
            .collect();
        DiscreteImmersion::new_periodic_curve(chart, nodes)
    }

    pub fn sphere_graph(r: f64, n_lat: usize, n_lon: usize) -> Result<Self> {
        DiscreteImmersion::new_radial_graph(vec![r; n_lat * n_lon], n_lat, n_lon)
    }

    fn fix_orientation(&mut self) -> Result<()> {
        let cache = fundamental_forms(self)?;
        if let GeometryCache::Curve(c) = cache {
            let total: f64 =
                c.kappa.iter().zip(&c.g).map(|(k, g)| k * g.sqrt() * c.du).sum();
            if total < 0.0 {
                self.orient = -self.orient;
            }
        }
        Ok(())
    }

    /// Mesh-quality invariants: finite coordinates, spacing ratio within
    /// [0.2, 5] of the mean for curves, strictly positive radii for graphs.
    pub fn quality_check(&self) -> Result<()> {
        if self.nodes.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepRejected("non-finite node coordinates".into()));
        }
        match &self.kind {
            ImmersionKind::RadialGraph { .. } => {
                if self.nodes.iter().any(|&r| r <= 0.0) {
                    return Err(Error::StepRejected("non-positive graph radius".into()));
                }
                Ok(())
            }
            _ => {
                let d = self.chart.dim;
                let n = self.nodes.len() / d;
                let uw = UnwrappedCurve::new(&self.chart, &self.nodes);
                let mut lens = Vec::with_capacity(n);
                for i in 0..n as i64 {
                    let a = uw.point(i);
                    let b = uw.point(i + 1);
                    let l2: f64 = (0..d).map(|k| (b[k] - a[k]) * (b[k] - a[k])).sum();
                    lens.push(l2.sqrt());
                }
                let mean: f64 = lens.iter().sum::<f64>() / n as f64;
                if mean <= 0.0 {
                    return Err(Error::DegenerateNode { node: 0 });
                }
                for (i, &l) in lens.iter().enumerate() {
                    if l < 1e-14 {
                        return Err(Error::DegenerateNode { node: i });
                    }
                    if l < 0.2 * mean || l > 5.0 * mean {
                        return Err(Error::StepRejected(format!(
                            "node spacing {l:.3e} outside [0.2, 5] x mean {mean:.3e} at node {i}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Embeddedness proxy: minimum pairwise node separation above
    /// 1e-3 x diameter.  O(n²); used at construction and resampling, not per
    /// step.
    pub fn check_separation(&self) -> Result<()> {
        if matches!(self.kind, ImmersionKind::RadialGraph { .. }) {
            // positive radii already guarantee an embedded graph
            return Ok(());
        }
        let d = self.chart.dim;
        let n = self.nodes.len() / d;
        let mut diam2 = 0.0f64;
        let mut minsep2 = f64::INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                let mut s = 0.0;
                for k in 0..d {
                    let dx = self.nodes[i * d + k] - self.nodes[j * d + k];
                    s += dx * dx;
                }
                diam2 = diam2.max(s);
                // neighbors along the curve are allowed to be close
                let gap = (j - i).min(n - (j - i));
                if gap > 1 {
                    minsep2 = minsep2.min(s);
                }
            }
        }
        if minsep2.sqrt() <= 1e-3 * diam2.sqrt() {
            return Err(Error::StepRejected(format!(
                "minimum node separation {:.3e} below 1e-3 x diameter {:.3e}",
                minsep2.sqrt(),
                diam2.sqrt()
            )));
        }
        Ok(())
    }
}

/// First/second fundamental forms, shape operator, scalar mean curvature and
/// oriented unit normal of the immersion.
pub fn fundamental_forms(im: &DiscreteImmersion) -> Result<GeometryCache> {
    match &im.kind {
        ImmersionKind::PeriodicCurve => curve_forms(im, None),
        ImmersionKind::SectionCurve { vertical } => curve_forms(im, Some(vertical)),
        ImmersionKind::RadialGraph { grid } => graph_forms(im, grid),
    }
}

fn curve_forms(im: &DiscreteImmersion, vertical: Option<&Vec<Vec<f64>>>) -> Result<GeometryCache> {
    let d = im.chart.dim;
    let n = im.nodes.len() / d;
    let du = im.du();
    let uw = UnwrappedCurve::new(&im.chart, &im.nodes);
    let w1 = d1_weights();
    let w2 = d2_weights();

    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut kappa = vec![0.0; n];
    let mut xi = vec![[0.0; 3]; n];
    let mut x_u = vec![[0.0; 3]; n];
    let mut hvec = vec![[0.0; 3]; n];

    let flat = im.chart.flat;
    for i in 0..n {
        let mut xu = [0.0f64; 3];
        let mut xuu = [0.0f64; 3];
        for k in 0..d {
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for (o, (a, b)) in (-2i64..=2).zip(w1.iter().zip(w2.iter())) {
                let v = uw.coord(i as i64 + o, k);
                s1 += a * v;
                s2 += b * v;
            }
            xu[k] = s1 / du;
            xuu[k] = s2 / (du * du);
        }
        let x0 = uw.point(i as i64);

        // covariant acceleration
        let mut acc = xuu;
        let gmat = if flat {
            None
        } else {
            let gamma = im.chart.christoffel(&x0)?;
            let corr = gamma.contract(&xu[..d], &xu[..d]);
            for k in 0..d {
                acc[k] += corr[k];
            }
            Some(im.chart.metric_at(&x0))
        };

        let ip = |a: &[f64; 3], b: &[f64; 3]| -> f64 {
            match &gmat {
                None => (0..d).map(|k| a[k] * b[k]).sum(),
                Some(m) => {
                    let mut s = 0.0;
                    for p in 0..d {
                        for q in 0..d {
                            s += m[(p, q)] * a[p] * b[q];
                        }
                    }
                    s
                }
            }
        };

        // tangent direction used for the hypersurface: sections project to
        // the horizontal space first
        let mut tdir = xu;
        if let Some(vert) = vertical {
            for v in vert {
                let c: f64 = (0..d).map(|k| xu[k] * v[k]).sum();
                for k in 0..d {
                    tdir[k] -= c * v[k];
                }
            }
        }
        let gval = ip(&tdir, &tdir);
        if gval < 1e-20 {
            return Err(Error::VerticalTangency { node: i });
        }

        // unit normal: Euclidean rotate within the (horizontal) plane, then
        // metric-orthonormalize against the tangent
        let mut nvec = [-tdir[1], tdir[0], 0.0];
        if !flat {
            let c = ip(&nvec, &tdir) / gval;
            for k in 0..d {
                nvec[k] -= c * tdir[k];
            }
        }
        let nn = ip(&nvec, &nvec).sqrt();
        if nn < 1e-20 {
            return Err(Error::DegenerateNode { node: i });
        }
        for k in 0..3 {
            nvec[k] = im.orient * nvec[k] / nn;
        }

        let hval = ip(&acc, &nvec);
        g[i] = gval;
        h[i] = hval;
        kappa[i] = hval / gval;
        xi[i] = nvec;
        x_u[i] = xu;
        for k in 0..3 {
            hvec[i][k] = kappa[i] * nvec[k];
        }
    }

    let length: f64 = g.iter().map(|v| v.sqrt() * du).sum();
    Ok(GeometryCache::Curve(CurveCache { n, du, g, h, kappa, xi, x_u, hvec, length }))
}

fn graph_forms(im: &DiscreteImmersion, grid: &GraphGrid) -> Result<GeometryCache> {
    let (nlat, nlon) = (grid.n_lat, grid.n_lon);
    let n = nlat * nlon;
    let r = &im.nodes;
    let r_th = grid.d_theta(r, 1.0);
    let r_ph = grid.d_phi(r);
    let r_thth = grid.d2_theta(r, 1.0);
    let r_phph = grid.d2_phi(r);
    let r_thph = grid.d2_theta_phi(r, 1.0);

    let mut g = vec![[0.0; 3]; n];
    let mut h = vec![[0.0; 3]; n];
    let mut a = vec![[0.0; 4]; n];
    let mut norm_h = vec![0.0; n];
    let mut min_eig_a = vec![0.0; n];
    let mut xi = vec![[0.0; 3]; n];
    let mut pos = vec![[0.0; 3]; n];
    let mut omega_dot_xi = vec![0.0; n];
    let mut area = 0.0;

    for idx in 0..n {
        let rr = r[idx];
        let om = grid.omega[idx];
        let om_th = grid.omega_th[idx];
        let om_ph = grid.omega_ph[idx];

        let x = scale(om, rr);
        let x_th = add(scale(om, r_th[idx]), scale(om_th, rr));
        let x_ph = add(scale(om, r_ph[idx]), scale(om_ph, rr));
        let x_thth = add3(
            scale(om, r_thth[idx]),
            scale(om_th, 2.0 * r_th[idx]),
            scale(grid.omega_thth[idx], rr),
        );
        let x_thph = add3(
            add(scale(om, r_thph[idx]), scale(om_th, r_ph[idx])),
            scale(om_ph, r_th[idx]),
            scale(grid.omega_thph[idx], rr),
        );
        let x_phph = add3(
            scale(om, r_phph[idx]),
            scale(om_ph, 2.0 * r_ph[idx]),
            scale(grid.omega_phph[idx], rr),
        );

        let gv = [dot(x_th, x_th), dot(x_th, x_ph), dot(x_ph, x_ph)];
        let nrm = cross(x_th, x_ph);
        let nn = dot(nrm, nrm).sqrt();
        if nn < 1e-18 {
            return Err(Error::DegenerateNode { node: idx });
        }
        // inward normal: -(X_θ × X_φ)/|..| points toward the origin
        let nvec = scale(nrm, -1.0 / nn);
        let hv = [dot(x_thth, nvec), dot(x_thph, nvec), dot(x_phph, nvec)];

        let det = gv[0] * gv[2] - gv[1] * gv[1];
        if det <= 0.0 {
            return Err(Error::DegenerateNode { node: idx });
        }
        let ginv = [gv[2] / det, -gv[1] / det, gv[0] / det];
        // A = g^{-1} h, row-major
        let av = [
            ginv[0] * hv[0] + ginv[1] * hv[1],
            ginv[0] * hv[1] + ginv[1] * hv[2],
            ginv[1] * hv[0] + ginv[2] * hv[1],
            ginv[1] * hv[1] + ginv[2] * hv[2],
        ];
        g[idx] = gv;
        h[idx] = hv;
        a[idx] = av;
        norm_h[idx] = av[0] + av[3];
        min_eig_a[idx] = eig2(&av).0;
        xi[idx] = nvec;
        pos[idx] = x;
        omega_dot_xi[idx] = dot(om, nvec);
        area += det.sqrt() * grid.dtheta * grid.dphi;
    }

    Ok(GeometryCache::Graph(GraphCache {
        n_lat: nlat,
        n_lon: nlon,
        g,
        h,
        a,
        norm_h,
        min_eig_a,
        xi,
        pos,
        omega_dot_xi,
        area,
    }))
}

#[inline]
fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
fn add3(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0] + c[0], a[1] + b[1] + c[1], a[2] + b[2] + c[2]]
}

/// Per-node field on an immersion.
#[derive(Clone, Debug)]
pub enum Field {
    Scalar(Vec<f64>),
    /// Symmetric (0,2)-tensor components: 1 per node on curves, 3 on graphs.
    Sym2(Vec<f64>),
}

/// Discrete Laplace-Beltrami of a scalar or symmetric 2-tensor field with
/// respect to the induced metric.
pub fn laplace_beltrami(im: &DiscreteImmersion, field: &Field) -> Result<Field> {
    let cache = fundamental_forms(im)?;
    match (&cache, field) {
        (GeometryCache::Curve(c), Field::Scalar(f)) => {
            check_len(f.len(), c.n)?;
            Ok(Field::Scalar(curve_lap_scalar(c, f)))
        }
        (GeometryCache::Curve(c), Field::Sym2(s)) => {
            check_len(s.len(), c.n)?;
            Ok(Field::Sym2(curve_lap_sym2(c, s)))
        }
        (GeometryCache::Graph(c), Field::Scalar(f)) => {
            let grid = match &im.kind {
                ImmersionKind::RadialGraph { grid } => grid,
                _ => unreachable!(),
            };
            check_len(f.len(), c.n_lat * c.n_lon)?;
            Ok(Field::Scalar(graph_lap_scalar(grid, c, f)))
        }
        (GeometryCache::Graph(c), Field::Sym2(s)) => {
            let grid = match &im.kind {
                ImmersionKind::RadialGraph { grid } => grid,
                _ => unreachable!(),
            };
            check_len(s.len(), 3 * c.n_lat * c.n_lon)?;
            Ok(Field::Sym2(graph_lap_sym2(grid, c, s)))
        }
    }
}

fn check_len(got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::ShapeMismatch { expected: format!("{want}"), got: format!("{got}") });
    }
    Ok(())
}

/// Γ^u_uu = g'/(2g) along the curve.
pub fn curve_gamma(c: &CurveCache) -> Vec<f64> {
    let gp = d1_periodic(&c.g, c.du);
    gp.iter().zip(&c.g).map(|(dp, g)| dp / (2.0 * g)).collect()
}

pub fn curve_lap_scalar(c: &CurveCache, f: &[f64]) -> Vec<f64> {
    let fu = d1_periodic(f, c.du);
    let fuu = d2_periodic(f, c.du);
    let gamma = curve_gamma(c);
    (0..c.n).map(|i| (fuu[i] - gamma[i] * fu[i]) / c.g[i]).collect()
}

/// Covariant Hessian (∇ d f)_uu along the curve.
pub fn curve_hess_scalar(c: &CurveCache, f: &[f64]) -> Vec<f64> {
    let fu = d1_periodic(f, c.du);
    let fuu = d2_periodic(f, c.du);
    let gamma = curve_gamma(c);
    (0..c.n).map(|i| fuu[i] - gamma[i] * fu[i]).collect()
}

/// Laplacian of a (0,2)-tensor S_uu along the curve:
/// g^{uu} (S'' - 2Γ'S - 5ΓS' + 6Γ²S).
pub fn curve_lap_sym2(c: &CurveCache, s: &[f64]) -> Vec<f64> {
    let sp = d1_periodic(s, c.du);
    let spp = d2_periodic(s, c.du);
    let gamma = curve_gamma(c);
    let gammap = d1_periodic(&gamma, c.du);
    (0..c.n)
        .map(|i| {
            (spp[i] - 2.0 * gammap[i] * s[i] - 5.0 * gamma[i] * sp[i]
                + 6.0 * gamma[i] * gamma[i] * s[i])
                / c.g[i]
        })
        .collect()
}

/// Surface Christoffel symbols of a graph from stencil derivatives of the
/// induced metric field.  Returned per node as Γ^c_ab with (a,b) symmetric,
/// packed \[c\]\[ab\] with ab in {θθ, θφ, φφ}.
fn graph_christoffel(grid: &GraphGrid, c: &GraphCache) -> Vec<[[f64; 3]; 2]> {
    let n = c.n_lat * c.n_lon;
    let comp = |k: usize| -> Vec<f64> { c.g.iter().map(|g| g[k]).collect() };
    let g00 = comp(0);
    let g01 = comp(1);
    let g11 = comp(2);
    // parities under the across-pole map: g_θθ +, g_θφ -, g_φφ +
    let d0 = [grid.d_theta(&g00, 1.0), grid.d_theta(&g01, -1.0), grid.d_theta(&g11, 1.0)];
    let d1 = [grid.d_phi(&g00), grid.d_phi(&g01), grid.d_phi(&g11)];
    let dg = |e: usize, a: usize, b: usize, idx: usize| -> f64 {
        let k = a + b; // 0->θθ, 1->θφ, 2->φφ
        if e == 0 {
            d0[k][idx]
        } else {
            d1[k][idx]
        }
    };
    let gcomp = |a: usize, b: usize, idx: usize| -> f64 { c.g[idx][a + b] };
    let mut out = vec![[[0.0; 3]; 2]; n];
    for idx in 0..n {
        let det = gcomp(0, 0, idx) * gcomp(1, 1, idx) - gcomp(0, 1, idx).powi(2);
        let ginv = [
            [gcomp(1, 1, idx) / det, -gcomp(0, 1, idx) / det],
            [-gcomp(0, 1, idx) / det, gcomp(0, 0, idx) / det],
        ];
        for cc in 0..2 {
            for (slot, (a, b)) in [(0usize, 0usize), (0, 1), (1, 1)].iter().enumerate() {
                let mut s = 0.0;
                for dd in 0..2 {
                    s += ginv[cc][dd] * (dg(*a, dd, *b, idx) + dg(*b, dd, *a, idx)
                        - dg(dd, *a, *b, idx));
                }
                out[idx][cc][slot] = 0.5 * s;
            }
        }
    }
    out
}

fn graph_lap_scalar(grid: &GraphGrid, c: &GraphCache, f: &[f64]) -> Vec<f64> {
    let n = c.n_lat * c.n_lon;
    let f_th = grid.d_theta(f, 1.0);
    let f_ph = grid.d_phi(f);
    let f_thth = grid.d2_theta(f, 1.0);
    let f_phph = grid.d2_phi(f);
    let f_thph = grid.d2_theta_phi(f, 1.0);
    let gamma = graph_christoffel(grid, c);
    let mut out = vec![0.0; n];
    for idx in 0..n {
        let det = c.g[idx][0] * c.g[idx][2] - c.g[idx][1] * c.g[idx][1];
        let ginv = [c.g[idx][2] / det, -c.g[idx][1] / det, c.g[idx][0] / det];
        let hess = |a: usize, b: usize| -> f64 {
            let dd = match (a, b) {
                (0, 0) => f_thth[idx],
                (1, 1) => f_phph[idx],
                _ => f_thph[idx],
            };
            let slot = a + b;
            dd - gamma[idx][0][slot] * f_th[idx] - gamma[idx][1][slot] * f_ph[idx]
        };
        out[idx] = ginv[0] * hess(0, 0) + 2.0 * ginv[1] * hess(0, 1) + ginv[2] * hess(1, 1);
    }
    out
}

fn graph_lap_sym2(grid: &GraphGrid, c: &GraphCache, s: &[f64]) -> Vec<f64> {
    let n = c.n_lat * c.n_lon;
    let comp = |k: usize| -> Vec<f64> { (0..n).map(|i| s[3 * i + k]).collect() };
    let s00 = comp(0);
    let s01 = comp(1);
    let s11 = comp(2);
    let gamma = graph_christoffel(grid, c);

    // first covariant derivative (∇_e S)_ab, 6 fields with parities
    let ds = |field: &Vec<f64>, e: usize, parity: f64| -> Vec<f64> {
        if e == 0 {
            grid.d_theta(field, parity)
        } else {
            grid.d_phi(field)
        }
    };
    let sval = |ab: usize, idx: usize| -> f64 {
        match ab {
            0 => s00[idx],
            1 => s01[idx],
            _ => s11[idx],
        }
    };
    let mut nabla = vec![vec![0.0; n]; 6]; // [e * 3 + ab]
    for e in 0..2 {
        let d = [
            ds(&s00, e, 1.0),
            ds(&s01, e, -1.0),
            ds(&s11, e, 1.0),
        ];
        for (slot, (a, b)) in [(0usize, 0usize), (0, 1), (1, 1)].iter().enumerate() {
            for idx in 0..n {
                let mut v = d[slot][idx];
                for cc in 0..2 {
                    v -= gamma[idx][cc][e + a] * sval(cc + b, idx);
                    v -= gamma[idx][cc][e + b] * sval(*a + cc, idx);
                }
                nabla[e * 3 + slot][idx] = v;
            }
        }
    }

    // second covariant derivative traced with g^{ef}, components (a,b)
    // parities of (∇_e S)_ab: (-1)^(#θ indices)
    let par = |e: usize, slot: usize| -> f64 {
        let thetas = (1 - e) + match slot {
            0 => 2,
            1 => 1,
            _ => 0,
        };
        if thetas % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    };
    let mut out = vec![0.0; 3 * n];
    for idx in 0..n {
        let det = c.g[idx][0] * c.g[idx][2] - c.g[idx][1] * c.g[idx][1];
        let ginv =
            [[c.g[idx][2] / det, -c.g[idx][1] / det], [-c.g[idx][1] / det, c.g[idx][0] / det]];
        for (slot, (a, b)) in [(0usize, 0usize), (0, 1), (1, 1)].iter().enumerate() {
            let mut acc = 0.0;
            for e in 0..2 {
                for f in 0..2 {
                    if ginv[e][f] == 0.0 {
                        continue;
                    }
                    // ∂_e (∇_f S)_ab
                    let fld = &nabla[f * 3 + slot];
                    let dterm = if e == 0 {
                        let p = par(f, slot);
                        let i = (idx / c.n_lon) as isize;
                        let j = (idx % c.n_lon) as isize;
                        (grid.at(fld, i + 1, j, p) - grid.at(fld, i - 1, j, p))
                            / (2.0 * grid.dtheta)
                    } else {
                        let i = idx / c.n_lon;
                        let j = idx % c.n_lon;
                        let jp = (j + 1) % c.n_lon;
                        let jm = (j + c.n_lon - 1) % c.n_lon;
                        (fld[i * c.n_lon + jp] - fld[i * c.n_lon + jm]) / (2.0 * grid.dphi)
                    };
                    let mut v = dterm;
                    for cc in 0..2 {
                        v -= gamma[idx][cc][e + f] * nabla[cc * 3 + slot][idx];
                        v -= gamma[idx][cc][e + a] * nabla[f * 3 + cc + b][idx];
                        v -= gamma[idx][cc][e + b] * nabla[f * 3 + a + cc][idx];
                    }
                    acc += ginv[e][f] * v;
                }
            }
            out[3 * idx + slot] = acc;
        }
    }
    out
}

/// Laplace-Beltrami of a scalar graph field, reusing an existing cache.
pub fn graph_laplacian_scalar(grid: &GraphGrid, cache: &GraphCache, f: &[f64]) -> Vec<f64> {
    graph_lap_scalar(grid, cache, f)
}

/// ||grad f||² = g^{ab} ∂_a f ∂_b f on a graph.
pub fn graph_grad_norm_sq(grid: &GraphGrid, cache: &GraphCache, f: &[f64]) -> Vec<f64> {
    let n = cache.n_lat * cache.n_lon;
    let f_th = grid.d_theta(f, 1.0);
    let f_ph = grid.d_phi(f);
    (0..n)
        .map(|idx| {
            let g = cache.g[idx];
            let det = g[0] * g[2] - g[1] * g[1];
            (g[2] * f_th[idx] * f_th[idx] - 2.0 * g[1] * f_th[idx] * f_ph[idx]
                + g[0] * f_ph[idx] * f_ph[idx])
                / det
        })
        .collect()
}

/// Tr Tr_g (∇A ∘ ∇A) = g^{ef} (∇_e A)^a_b (∇_f A)^b_a for the shape operator
/// field of a graph.
pub fn graph_shape_gradient_norm_sq(grid: &GraphGrid, cache: &GraphCache) -> Vec<f64> {
    let n = cache.n_lat * cache.n_lon;
    let comp = |k: usize| -> Vec<f64> { cache.a.iter().map(|a| a[k]).collect() };
    // parities: A^θ_θ +, A^θ_φ -, A^φ_θ -, A^φ_φ +
    let fields = [comp(0), comp(1), comp(2), comp(3)];
    let pars = [1.0, -1.0, -1.0, 1.0];
    let gamma = graph_christoffel(grid, cache);
    let mut d_th = Vec::with_capacity(4);
    let mut d_ph = Vec::with_capacity(4);
    for (f, p) in fields.iter().zip(pars.iter()) {
        d_th.push(grid.d_theta(f, *p));
        d_ph.push(grid.d_phi(f));
    }
    let aval = |idx: usize, a: usize, b: usize| -> f64 { cache.a[idx][a * 2 + b] };
    // (∇_e A)^a_b = ∂_e A^a_b + Γ^a_ec A^c_b - Γ^c_eb A^a_c
    let nabla = |idx: usize, e: usize, a: usize, b: usize| -> f64 {
        let k = a * 2 + b;
        let mut v = if e == 0 { d_th[k][idx] } else { d_ph[k][idx] };
        for cc in 0..2 {
            v += gamma[idx][a][e + cc] * aval(idx, cc, b);
            v -= gamma[idx][cc][e + b] * aval(idx, a, cc);
        }
        v
    };
    (0..n)
        .map(|idx| {
            let g = cache.g[idx];
            let det = g[0] * g[2] - g[1] * g[1];
            let ginv = [[g[2] / det, -g[1] / det], [-g[1] / det, g[0] / det]];
            let mut acc = 0.0;
            for e in 0..2 {
                for f in 0..2 {
                    if ginv[e][f] == 0.0 {
                        continue;
                    }
                    let mut tr = 0.0;
                    for a in 0..2 {
                        for b in 0..2 {
                            tr += nabla(idx, e, a, b) * nabla(idx, f, b, a);
                        }
                    }
                    acc += ginv[e][f] * tr;
                }
            }
            acc
        })
        .collect()
}

/// Orthonormal horizontal/vertical frames of the invariant-surface tangent
/// space at one node of a section curve.
pub fn horizontal_split(
    model: &SubmersionModel,
    im: &DiscreteImmersion,
    cache: &CurveCache,
    node: usize,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let d = im.chart.dim;
    let x = &im.nodes[node * d..(node + 1) * d];
    let vert = model.vertical_frame(x);
    let mut tang = cache.x_u[node];
    for v in &vert {
        let c: f64 = (0..d).map(|k| tang[k] * v[k]).sum();
        for k in 0..d {
            tang[k] -= c * v[k];
        }
    }
    let norm: f64 = (0..d).map(|k| tang[k] * tang[k]).sum::<f64>().sqrt();
    let full: f64 = (0..d).map(|k| cache.x_u[node][k].powi(2)).sum::<f64>().sqrt();
    if norm < 1e-10 * full.max(1e-30) {
        return Err(Error::VerticalTangency { node });
    }
    let hframe = vec![(0..d).map(|k| tang[k] / norm).collect::<Vec<f64>>()];
    Ok((hframe, vert))
}

/// Smallest principal curvature per node.
pub fn min_principal_curvature(cache: &GeometryCache) -> Vec<f64> {
    match cache {
        GeometryCache::Curve(c) => c.kappa.clone(),
        GeometryCache::Graph(c) => c.min_eig_a.clone(),
    }
}

// ---------------------------------------------------------------------------
// Arc-length resampling through a periodic cubic spline.

struct PeriodicSpline {
    n: usize,
    dim: usize,
    y: Vec<f64>,      // detrended values, per coordinate
    m: Vec<f64>,      // spline second derivatives
    trend: Vec<f64>,  // winding / n per coordinate
    base: Vec<f64>,   // y offsets
}

impl PeriodicSpline {
    fn new(uw: &UnwrappedCurve) -> Self {
        let (n, dim) = (uw.n, uw.dim);
        let mut y = vec![0.0; n * dim];
        let mut m = vec![0.0; n * dim];
        let mut trend = vec![0.0; dim];
        let mut base = vec![0.0; dim];
        for k in 0..dim {
            trend[k] = uw.winding[k] / n as f64;
            base[k] = uw.coords[k];
            let vals: Vec<f64> = (0..n)
                .map(|i| uw.coords[i * dim + k] - base[k] - trend[k] * i as f64)
                .collect();
            let sec = periodic_spline_m(&vals);
            for i in 0..n {
                y[i * dim + k] = vals[i];
                m[i * dim + k] = sec[i];
            }
        }
        PeriodicSpline { n, dim, y, m, trend, base }
    }

    /// Position at global parameter t in [0, n].
    fn eval(&self, t: f64) -> Vec<f64> {
        let n = self.n;
        let seg = (t.floor() as usize).min(n - 1);
        let s = t - seg as f64;
        let j = (seg + 1) % n;
        let _ = n;
        (0..self.dim)
            .map(|k| {
                // detrended values are periodic: y[0] plays the role of y[n]
                let yi = self.y[seg * self.dim + k];
                let yj = self.y[j * self.dim + k];
                let mi = self.m[seg * self.dim + k];
                let mj = self.m[j * self.dim + k];
                let a = 1.0 - s;
                let spline = yi * a
                    + yj * s
                    + ((a * a * a - a) * mi + (s * s * s - s) * mj) / 6.0;
                spline + self.base[k] + self.trend[k] * t
            })
            .collect()
    }

    /// Derivative with respect to the global parameter.
    fn deriv(&self, t: f64) -> Vec<f64> {
        let n = self.n;
        let seg = (t.floor() as usize).min(n - 1);
        let s = t - seg as f64;
        let j = (seg + 1) % n;
        (0..self.dim)
            .map(|k| {
                let yi = self.y[seg * self.dim + k];
                let yj = if j == 0 { self.y[k] } else { self.y[j * self.dim + k] };
                let mi = self.m[seg * self.dim + k];
                let mj = if j == 0 { self.m[k] } else { self.m[j * self.dim + k] };
                let a = 1.0 - s;
                (yj - yi) + ((1.0 - 3.0 * a * a) * mi + (3.0 * s * s - 1.0) * mj) / 6.0
                    + self.trend[k]
            })
            .collect()
    }
}

/// Second derivatives of the natural periodic cubic spline on a uniform
/// parameter grid (cyclic tridiagonal system via Sherman-Morrison).
fn periodic_spline_m(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        let ip = (i + 1) % n;
        let im = (i + n - 1) % n;
        rhs[i] = 6.0 * (y[ip] - 2.0 * y[i] + y[im]);
    }
    // system: m[i-1] + 4 m[i] + m[i+1] = rhs[i]  (cyclic)
    solve_cyclic_tridiag(1.0, 4.0, 1.0, &rhs)
}

fn solve_cyclic_tridiag(a: f64, b: f64, c: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    if n == 1 {
        return vec![rhs[0] / (a + b + c)];
    }
    // Sherman-Morrison with u = (γ, 0, ..., 0, a)ᵀ? Use the standard trick.
    let gamma = -b;
    let mut bb = vec![b; n];
    bb[0] = b - gamma;
    bb[n - 1] = b - a * c / gamma;
    let solve = |d: &Vec<f64>, r: &[f64]| -> Vec<f64> {
        // plain Thomas for tridiag(a, d, c)
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        cp[0] = c / d[0];
        dp[0] = r[0] / d[0];
        for i in 1..n {
            let mden = d[i] - a * cp[i - 1];
            cp[i] = c / mden;
            dp[i] = (r[i] - a * dp[i - 1]) / mden;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = dp[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = dp[i] - cp[i] * x[i + 1];
        }
        x
    };
    let x1 = solve(&bb, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = a;
    let x2 = solve(&bb, &u);
    let vx1 = x1[0] + c / gamma * x1[n - 1];
    let vx2 = x2[0] + c / gamma * x2[n - 1];
    let factor = vx1 / (1.0 + vx2);
    (0..n).map(|i| x1[i] - factor * x2[i]).collect()
}

/// Redistribute curve nodes to uniform arc length (chart metric) through a
/// periodic cubic spline.  Node count is preserved; node 0 stays anchored at
/// the old starting point.
pub fn resample(im: &DiscreteImmersion) -> Result<DiscreteImmersion> {
    match &im.kind {
        ImmersionKind::PeriodicCurve | ImmersionKind::SectionCurve { .. } => {}
        _ => return Err(Error::UnsupportedKind("resample supports curves only".into())),
    }
    let d = im.chart.dim;
    let n = im.nodes.len() / d;
    let uw = UnwrappedCurve::new(&im.chart, &im.nodes);
    let spline = PeriodicSpline::new(&uw);

    let speed = |t: f64| -> f64 {
        let dp = spline.deriv(t);
        if im.chart.flat {
            dp.iter().map(|v| v * v).sum::<f64>().sqrt()
        } else {
            let p = spline.eval(t);
            let g = im.chart.metric_at(&p);
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    s += g[(i, j)] * dp[i] * dp[j];
                }
            }
            s.sqrt()
        }
    };

    // 4-point Gauss-Legendre per unit segment
    const GX: [f64; 4] = [0.069431844202974, 0.330009478207572, 0.669990521792428, 0.930568155797026];
    const GW: [f64; 4] = [0.173927422568727, 0.326072577431273, 0.326072577431273, 0.173927422568727];
    let seg_len = |t0: f64, t1: f64| -> f64 {
        let w = t1 - t0;
        GX.iter().zip(GW.iter()).map(|(x, wt)| wt * speed(t0 + x * w)).sum::<f64>() * w
    };

    let mut cum = vec![0.0; n + 1];
    for i in 0..n {
        cum[i + 1] = cum[i] + seg_len(i as f64, (i + 1) as f64);
    }
    let total = cum[n];

    let mut new_nodes = vec![0.0; n * d];
    new_nodes[..d].copy_from_slice(&uw.point(0));
    for j in 1..n {
        let target = total * j as f64 / n as f64;
        // locate segment
        let mut seg = match cum.binary_search_by(|v| v.partial_cmp(&target).unwrap()) {
            Ok(k) => k,
            Err(k) => k - 1,
        };
        seg = seg.min(n - 1);
        // bisection within the segment
        let (mut lo, mut hi) = (seg as f64, seg as f64 + 1.0);
        let base = cum[seg];
        for _ in 0..45 {
            let mid = 0.5 * (lo + hi);
            if base + seg_len(seg as f64, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        let p = spline.eval(t);
        new_nodes[j * d..(j + 1) * d].copy_from_slice(&p);
    }

    let mut wrapped = new_nodes;
    for i in 0..n {
        im.chart.wrap(&mut wrapped[i * d..(i + 1) * d]);
    }
    let out = DiscreteImmersion {
        kind: im.kind.clone(),
        chart: im.chart.clone(),
        nodes: wrapped,
        orient: im.orient,
    };
    out.quality_check()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unit_circle_curvature() {
        let im = DiscreteImmersion::circle(1.0, 256);
        let cache = fundamental_forms(&im).unwrap();
        let c = cache.as_curve().unwrap();
        for &k in &c.kappa {
            assert_abs_diff_eq!(k, 1.0, epsilon = 1e-3);
        }
        assert_abs_diff_eq!(c.length, 2.0 * std::f64::consts::PI, epsilon = 1e-6);
    }

    #[test]
    fn curvature_convergence_is_at_least_second_order() {
        let mut errs = Vec::new();
        for &n in &[64usize, 128, 256, 512] {
            let im = DiscreteImmersion::circle(1.0, n);
            let cache = fundamental_forms(&im).unwrap();
            let c = cache.as_curve().unwrap();
            let e = c.kappa.iter().map(|k| (k - 1.0).abs()).fold(0.0f64, f64::max);
            errs.push(e);
        }
        for w in errs.windows(2) {
            assert!(
                w[0] / w[1] >= 3.5,
                "error should drop by >= 3.5x per doubling, got {:?}",
                errs
            );
        }
    }

    #[test]
    fn ellipse_curvature_matches_closed_form() {
        // κ(t) = a b / (a² sin²t + b² cos²t)^{3/2}
        let (a, b) = (2.0, 1.0);
        let im = DiscreteImmersion::ellipse(a, b, 512);
        let cache = fundamental_forms(&im).unwrap();
        let c = cache.as_curve().unwrap();
        assert_abs_diff_eq!(c.kappa[0], 2.0, epsilon = 1e-2);
        let min = c.kappa.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(min, b / (a * a), epsilon = 1e-2);
        for (i, &k) in c.kappa.iter().enumerate() {
            let t = 2.0 * std::f64::consts::PI * i as f64 / 512.0;
            let expect = a * b / (a * a * t.sin().powi(2) + b * b * t.cos().powi(2)).powf(1.5);
            assert_abs_diff_eq!(k, expect, epsilon = 1e-4 * (1.0 + expect));
        }
    }

    #[test]
    fn sphere_graph_is_exact() {
        let im = DiscreteImmersion::sphere_graph(2.0, 64, 128).unwrap();
        let cache = fundamental_forms(&im).unwrap();
        let c = cache.as_graph().unwrap();
        for idx in 0..c.norm_h.len() {
            assert_abs_diff_eq!(c.norm_h[idx], 1.0, epsilon = 1e-12);
            // double eigenvalues split by sqrt(roundoff) in the closed form
            assert_abs_diff_eq!(c.min_eig_a[idx], 0.5, epsilon = 1e-7);
            assert_abs_diff_eq!(c.omega_dot_xi[idx], -1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(
            c.area,
            16.0 * std::f64::consts::PI,
            epsilon = 16.0 * std::f64::consts::PI * 2e-4
        );
    }

    #[test]
    fn pole_rows_match_interior_on_sphere() {
        let im = DiscreteImmersion::sphere_graph(1.0, 16, 32).unwrap();
        let cache = fundamental_forms(&im).unwrap();
        let c = cache.as_graph().unwrap();
        // pole-adjacent rows i = 0 and i = n_lat-1
        for j in 0..32 {
            assert_abs_diff_eq!(c.norm_h[j], 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(c.norm_h[15 * 32 + j], 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn shape_operator_consistency_a_equals_ginv_h() {
        // bumpy radial graph
        let (nlat, nlon) = (16, 32);
        let grid = GraphGrid::new(nlat, nlon).unwrap();
        let radii: Vec<f64> = (0..nlat * nlon)
            .map(|idx| {
                let i = idx / nlon;
                let j = idx % nlon;
                let th = grid.theta[i];
                let ph = j as f64 * grid.dphi;
                1.0 + 0.1 * th.sin() * th.sin() * (2.0 * ph).cos()
            })
            .collect();
        let im = DiscreteImmersion::new_radial_graph(radii, nlat, nlon).unwrap();
        let cache = fundamental_forms(&im).unwrap();
        let c = cache.as_graph().unwrap();
        for idx in 0..nlat * nlon {
            let g = c.g[idx];
            let h = c.h[idx];
            let a = c.a[idx];
            // h = g A (both slots symmetric): reconstruct and compare
            let h00 = g[0] * a[0] + g[1] * a[2];
            let h01 = g[0] * a[1] + g[1] * a[3];
            let h11 = g[1] * a[1] + g[2] * a[3];
            assert_abs_diff_eq!(h00, h[0], epsilon = 1e-10 * (1.0 + h[0].abs()));
            assert_abs_diff_eq!(h01, h[1], epsilon = 1e-10 * (1.0 + h[1].abs()));
            assert_abs_diff_eq!(h11, h[2], epsilon = 1e-10 * (1.0 + h[2].abs()));
            // unit normal, orthogonal to tangents
            let n = c.xi[idx];
            assert_abs_diff_eq!(dot(n, n), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let im = DiscreteImmersion::ellipse(2.0, 1.0, 128);
        let out = laplace_beltrami(&im, &Field::Scalar(vec![3.5; 128])).unwrap();
        if let Field::Scalar(v) = out {
            for x in v {
                assert_abs_diff_eq!(x, 0.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn laplacian_of_sin_theta_on_unit_circle() {
        let n = 128;
        let im = DiscreteImmersion::circle(1.0, n);
        let f: Vec<f64> =
            (0..n).map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin()).collect();
        let out = laplace_beltrami(&im, &Field::Scalar(f.clone())).unwrap();
        if let Field::Scalar(v) = out {
            for (lap, orig) in v.iter().zip(&f) {
                // Δ sin = -sin on the unit circle; tolerance O(N^-2)
                assert_abs_diff_eq!(lap, &-orig, epsilon = 1.0 / (n * n) as f64 * 10.0);
            }
        }
    }

    #[test]
    fn laplacian_of_position_recovers_mean_curvature() {
        let n = 256;
        let im = DiscreteImmersion::circle(1.0, n);
        let xs: Vec<f64> = (0..n).map(|i| im.nodes[2 * i]).collect();
        let ys: Vec<f64> = (0..n).map(|i| im.nodes[2 * i + 1]).collect();
        let lx = match laplace_beltrami(&im, &Field::Scalar(xs)).unwrap() {
            Field::Scalar(v) => v,
            _ => unreachable!(),
        };
        let ly = match laplace_beltrami(&im, &Field::Scalar(ys)).unwrap() {
            Field::Scalar(v) => v,
            _ => unreachable!(),
        };
        for i in 0..n {
            let norm = (lx[i] * lx[i] + ly[i] * ly[i]).sqrt();
            assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-3);
        }
    }

    #[test]
    fn laplacian_of_metric_tensor_vanishes() {
        // ∇g = 0, so the covariant tensor Laplacian of g is zero.
        let im = DiscreteImmersion::ellipse(1.5, 1.0, 128);
        let cache = fundamental_forms(&im).unwrap();
        let c = cache.as_curve().unwrap();
        let out = laplace_beltrami(&im, &Field::Sym2(c.g.clone())).unwrap();
        if let Field::Sym2(v) = out {
            // zero up to the 4th-order truncation of the product rule
            for x in v {
                assert_abs_diff_eq!(x, 0.0, epsilon = 1e-3);
            }
        }
        // on the circle the metric field is constant and the result is exact
        let im = DiscreteImmersion::circle(1.0, 64);
        let cache = fundamental_forms(&im).unwrap();
        let c = cache.as_curve().unwrap();
        let out = laplace_beltrami(&im, &Field::Sym2(c.g.clone())).unwrap();
        if let Field::Sym2(v) = out {
            for x in v {
                assert_abs_diff_eq!(x, 0.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn graph_tensor_laplacian_of_parallel_tensor_vanishes() {
        // On a round sphere h = (1/r) g is parallel.
        let im = DiscreteImmersion::sphere_graph(1.5, 16, 32).unwrap();
        let cache = fundamental_forms(&im).unwrap();
        let c = cache.as_graph().unwrap();
        let packed: Vec<f64> = c.h.iter().flat_map(|x| x.to_vec()).collect();
        let out = laplace_beltrami(&im, &Field::Sym2(packed)).unwrap();
        if let Field::Sym2(v) = out {
            for x in v {
                assert_abs_diff_eq!(x, 0.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn resample_is_identity_on_uniform_circle() {
        let im = DiscreteImmersion::circle(1.0, 128);
        let out = resample(&im).unwrap();
        for (a, b) in out.nodes.iter().zip(&im.nodes) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn resample_uniformizes_clustered_circle() {
        let n = 128;
        // clustered parameterization of the unit circle
        let nodes: Vec<f64> = (0..n)
            .flat_map(|i| {
                let s = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                let t = s + 0.35 * s.sin();
                [t.cos(), t.sin()]
            })
            .collect();
        let im =
            DiscreteImmersion::new_periodic_curve(MetricChart::euclidean(2), nodes).unwrap();
        let out = resample(&im).unwrap();
        let mut lens = Vec::new();
        for i in 0..n {
            let j = (i + 1) % n;
            let dx = out.nodes[2 * j] - out.nodes[2 * i];
            let dy = out.nodes[2 * j + 1] - out.nodes[2 * i + 1];
            lens.push((dx * dx + dy * dy).sqrt());
        }
        let mean: f64 = lens.iter().sum::<f64>() / n as f64;
        for l in lens {
            assert!((l / mean - 1.0).abs() < 0.01, "spacing nonuniform: {l} vs {mean}");
        }
        // dense-polyline length oracle: total length preserved
        let dense = 16384;
        let oracle: f64 = (0..dense)
            .map(|i| {
                let s0 = 2.0 * std::f64::consts::PI * i as f64 / dense as f64;
                let s1 = 2.0 * std::f64::consts::PI * (i + 1) as f64 / dense as f64;
                let t0 = s0 + 0.35 * s0.sin();
                let t1 = s1 + 0.35 * s1.sin();
                ((t1.cos() - t0.cos()).powi(2) + (t1.sin() - t0.sin()).powi(2)).sqrt()
            })
            .sum();
        let total: f64 = (0..n)
            .map(|i| {
                let j = (i + 1) % n;
                let dx = out.nodes[2 * j] - out.nodes[2 * i];
                let dy = out.nodes[2 * j + 1] - out.nodes[2 * i + 1];
                (dx * dx + dy * dy).sqrt()
            })
            .sum();
        let spacing = oracle / n as f64;
        assert!((total - oracle).abs() < spacing * spacing * n as f64);
    }

    #[test]
    fn resample_preserves_ellipse_length() {
        let n = 256;
        let im = DiscreteImmersion::ellipse(2.0, 1.0, n);
        let out = resample(&im).unwrap();
        // dense polyline oracle
        let dense = 32768;
        let oracle: f64 = (0..dense)
            .map(|i| {
                let t0 = 2.0 * std::f64::consts::PI * i as f64 / dense as f64;
                let t1 = 2.0 * std::f64::consts::PI * (i + 1) as f64 / dense as f64;
                ((2.0 * (t1.cos() - t0.cos())).powi(2) + (t1.sin() - t0.sin()).powi(2)).sqrt()
            })
            .sum();
        let total: f64 = (0..n)
            .map(|i| {
                let j = (i + 1) % n;
                let dx = out.nodes[2 * j] - out.nodes[2 * i];
                let dy = out.nodes[2 * j + 1] - out.nodes[2 * i + 1];
                (dx * dx + dy * dy).sqrt()
            })
            .sum();
        let spacing = oracle / n as f64;
        assert!((total - oracle).abs() < spacing * spacing);
    }

    #[test]
    fn geometry_is_equivariant_under_chart_isometries() {
        let im = DiscreteImmersion::ellipse(2.0, 1.0, 128);
        let cache = fundamental_forms(&im).unwrap();
        let c0 = cache.as_curve().unwrap();
        let (s, c) = 0.7f64.sin_cos();
        let rotated: Vec<f64> = (0..128)
            .flat_map(|i| {
                let x = im.nodes[2 * i];
                let y = im.nodes[2 * i + 1];
                [c * x - s * y + 0.3, s * x + c * y - 0.1]
            })
            .collect();
        let im2 =
            DiscreteImmersion::new_periodic_curve(MetricChart::euclidean(2), rotated).unwrap();
        let cache2 = fundamental_forms(&im2).unwrap();
        let c1 = cache2.as_curve().unwrap();
        for i in 0..128 {
            assert_abs_diff_eq!(c0.kappa[i], c1.kappa[i], epsilon = 1e-10);
            assert_abs_diff_eq!(c0.g[i], c1.g[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn section_curve_reports_cylinder_geometry() {
        let model = SubmersionModel::translation(3, 1);
        let n = 128;
        let nodes: Vec<f64> = (0..n)
            .flat_map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                [t.cos(), t.sin(), 0.3 * (2.0 * t).sin()]
            })
            .collect();
        let im = DiscreteImmersion::new_section_curve(&model, nodes).unwrap();
        let cache = fundamental_forms(&im).unwrap();
        let c = cache.as_curve().unwrap();
        // the invariant surface is the unit cylinder: ||H|| = 1
        for &k in &c.kappa {
            assert_abs_diff_eq!(k, 1.0, epsilon = 1e-3);
        }
        // horizontal split: H = circle tangent, V = e_z
        let (hf, vf) = horizontal_split(&model, &im, c, 7).unwrap();
        assert_eq!(hf.len(), 1);
        assert_eq!(vf.len(), 1);
        assert_abs_diff_eq!(hf[0][2], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(vf[0][2], 1.0, epsilon = 1e-14);
        let ip: f64 = hf[0].iter().zip(&vf[0]).map(|(a, b)| a * b).sum();
        assert_abs_diff_eq!(ip, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn stationary_line_section_has_zero_curvature() {
        // vertical plane through a straight line: H = 0
        let model = SubmersionModel::translation(3, 1);
        let n = 64;
        // closed "line" is impossible; use a very flat ellipse and check the
        // nearly straight side, or rather check a big circle locally: instead
        // assert that scaling the circle up scales curvature down.
        let big: Vec<f64> = (0..n)
            .flat_map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                [100.0 * t.cos(), 100.0 * t.sin(), 0.0]
            })
            .collect();
        let im = DiscreteImmersion::new_section_curve(&model, big).unwrap();
        let cache = fundamental_forms(&im).unwrap();
        let c = cache.as_curve().unwrap();
        for &k in &c.kappa {
            assert_abs_diff_eq!(k, 0.01, epsilon = 1e-5);
        }
    }

    #[test]
    fn degenerate_curve_is_rejected() {
        let mut nodes = vec![0.0; 2 * 16];
        for i in 0..16 {
            let t = 2.0 * std::f64::consts::PI * i as f64 / 16.0;
            nodes[2 * i] = t.cos();
            nodes[2 * i + 1] = t.sin();
        }
        nodes[4] = nodes[2];
        nodes[5] = nodes[3]; // repeated point
        let err =
            DiscreteImmersion::new_periodic_curve(MetricChart::euclidean(2), nodes).unwrap_err();
        assert!(matches!(err, Error::DegenerateNode { .. } | Error::StepRejected(_)));
    }
}
