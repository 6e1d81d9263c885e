//! Coordinate charts with Riemannian metrics and pointwise curvature data.
//!
//! A [`MetricChart`] owns a metric callback `x -> g_ij(x)` on an axis-aligned
//! box (axes may be periodic) and provides the Levi-Civita connection and the
//! curvature tensor through finite differences of the metric alone.  Nothing
//! downstream differences an assembled quantity: Christoffel symbols, the
//! Riemann tensor and its covariant derivative are exact tensor algebra in
//! (g, dg, d2g, d3g), which keeps roundoff amplification out of high
//! derivatives.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::sync::Arc;

/// Metric callback: coordinates -> symmetric positive-definite matrix.
pub type MetricFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
/// Analytic metric derivative callback: (coordinates, axis) -> d g / d x_axis.
pub type MetricDerivFn = Arc<dyn Fn(&[f64], usize) -> DMatrix<f64> + Send + Sync>;

/// Condition-number threshold separating genuine chart degeneracy from roundoff.
pub const DEGENERACY_COND: f64 = 1e12;

/// Step used for second and third metric derivatives.  First derivatives use
/// the chart's `fd_step`; higher orders need a larger step to keep roundoff
/// amplification (eps/h^3) below truncation.
pub const HI_DERIV_STEP: f64 = 5e-3;

/// How metric derivatives are obtained.
#[derive(Clone)]
pub enum DerivMode {
    /// Centered finite differences of the metric callback.
    FiniteDifference,
    /// Analytic first-derivative callback; higher derivatives still by differences.
    Analytic(MetricDerivFn),
}

/// Axis-aligned coordinate box, with optionally periodic axes.
#[derive(Clone, Debug)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub periodic: Vec<bool>,
}

impl Domain {
    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        let n = lo.len();
        Domain { lo, hi, periodic: vec![false; n] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Period of an axis (only meaningful if that axis is periodic).
    pub fn period(&self, k: usize) -> f64 {
        self.hi[k] - self.lo[k]
    }
}

/// A coordinate chart carrying a Riemannian metric.
#[derive(Clone)]
pub struct MetricChart {
    pub dim: usize,
    pub domain: Domain,
    pub name: String,
    /// Flat Euclidean chart: connection and curvature vanish identically,
    /// letting hot paths skip the finite-difference machinery.
    pub flat: bool,
    pub deriv_mode: DerivMode,
    pub fd_step: f64,
    metric: MetricFn,
}

impl std::fmt::Debug for MetricChart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricChart")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("flat", &self.flat)
            .finish_non_exhaustive()
    }
}

/// Christoffel symbols Γ^k_ij at a point (symmetric in i, j).
#[derive(Clone, Debug)]
pub struct Christoffel {
    pub dim: usize,
    v: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(dim: usize) -> Self {
        Christoffel { dim, v: vec![0.0; dim * dim * dim] }
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.v[(k * self.dim + i) * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, k: usize, i: usize, j: usize, val: f64) {
        self.v[(k * self.dim + i) * self.dim + j] = val;
    }

    /// Contraction Γ^k_ij a^i b^j for all k.
    pub fn contract(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for k in 0..d {
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    s += self.get(k, i, j) * a[i] * b[j];
                }
            }
            out[k] = s;
        }
        out
    }
}

/// Riemann tensor R^l_ijk = (R(e_i,e_j)e_k)^l and friends at one point.
#[derive(Clone, Debug)]
pub struct CurvatureData {
    pub point: Vec<f64>,
    pub christoffel: Christoffel,
    /// R^l_ijk indexed \[l\]\[i\]\[j\]\[k\].
    pub riemann: Vec<f64>,
    /// ∇_m R^l_ijk indexed \[m\]\[l\]\[i\]\[j\]\[k\].
    pub nabla_riemann: Vec<f64>,
    /// Pointwise norm of ∇R with respect to g.
    pub nabla_r_norm: f64,
    pub dim: usize,
    metric: DMatrix<f64>,
    metric_inv: DMatrix<f64>,
}

impl CurvatureData {
    #[inline]
    pub fn r_up(&self, l: usize, i: usize, j: usize, k: usize) -> f64 {
        let d = self.dim;
        self.riemann[((l * d + i) * d + j) * d + k]
    }

    #[inline]
    pub fn nabla_r_up(&self, m: usize, l: usize, i: usize, j: usize, k: usize) -> f64 {
        let d = self.dim;
        self.nabla_riemann[(((m * d + l) * d + i) * d + j) * d + k]
    }

    /// Lowered tensor R_ijkl = g(R(e_i,e_j)e_k, e_l).
    pub fn r_low(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        (0..self.dim).map(|m| self.metric[(l, m)] * self.r_up(m, i, j, k)).sum()
    }

    /// Ricci tensor Ric_jk = R^i_ijk.
    pub fn ricci(&self, j: usize, k: usize) -> f64 {
        (0..self.dim).map(|i| self.r_up(i, i, j, k)).sum()
    }

    /// Sectional curvature of the coordinate 2-plane spanned by e_a, e_b.
    pub fn sectional(&self, a: usize, b: usize) -> f64 {
        let g = &self.metric;
        let denom = g[(a, a)] * g[(b, b)] - g[(a, b)] * g[(a, b)];
        self.r_low(a, b, b, a) / denom
    }

    pub fn metric(&self) -> &DMatrix<f64> {
        &self.metric
    }

    pub fn metric_inv(&self) -> &DMatrix<f64> {
        &self.metric_inv
    }
}

/// Result of [`MetricChart::ambient_l_estimate`].
#[derive(Clone, Debug)]
pub struct LEstimate {
    /// max over samples of ||∇R||.
    pub l_max: f64,
    /// max/min ratio across samples; values far above 1 flag a metric that is
    /// not locally homogeneous, where a single constant L is meaningless.
    pub constancy_ratio: f64,
}

// 4th-order centered stencils. Offsets paired with weights; divide by h^order.
const D1_OFFS: [i32; 4] = [-2, -1, 1, 2];
const D1_W: [f64; 4] = [1.0 / 12.0, -2.0 / 3.0, 2.0 / 3.0, -1.0 / 12.0];
const D2_OFFS: [i32; 5] = [-2, -1, 0, 1, 2];
const D2_W: [f64; 5] = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
const D3_OFFS: [i32; 6] = [-3, -2, -1, 1, 2, 3];
const D3_W: [f64; 6] = [1.0 / 8.0, -1.0, 13.0 / 8.0, -13.0 / 8.0, 1.0, -1.0 / 8.0];

impl MetricChart {
    pub fn new(
        name: impl Into<String>,
        domain: Domain,
        metric: MetricFn,
        deriv_mode: DerivMode,
        fd_step: f64,
        flat: bool,
    ) -> Self {
        let dim = domain.dim();
        MetricChart { dim, domain, name: name.into(), flat, deriv_mode, fd_step, metric }
    }

    /// Flat Euclidean chart of the given dimension on a large box.
    pub fn euclidean(dim: usize) -> Self {
        let domain = Domain::boxed(vec![-1e6; dim], vec![1e6; dim]);
        let metric: MetricFn = Arc::new(move |_x: &[f64]| DMatrix::identity(dim, dim));
        MetricChart::new(
            format!("euclidean{dim}"),
            domain,
            metric,
            DerivMode::FiniteDifference,
            1e-5,
            true,
        )
    }

    /// Polar coordinates on the punctured plane: g = dr^2 + r^2 dθ^2.
    pub fn polar(r_max: f64) -> Self {
        let domain = Domain {
            lo: vec![0.0, 0.0],
            hi: vec![r_max, 2.0 * std::f64::consts::PI],
            periodic: vec![false, true],
        };
        let metric: MetricFn = Arc::new(|x: &[f64]| {
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, x[0] * x[0]]))
        });
        MetricChart::new("polar", domain, metric, DerivMode::FiniteDifference, 1e-5, false)
    }

    /// Round sphere of the given radius: g = r0^2 (dθ^2 + sin^2 θ dφ^2),
    /// θ in (0, π), φ periodic.
    pub fn sphere_surface(r0: f64) -> Self {
        let domain = Domain {
            lo: vec![0.0, 0.0],
            hi: vec![std::f64::consts::PI, 2.0 * std::f64::consts::PI],
            periodic: vec![false, true],
        };
        let metric: MetricFn = Arc::new(move |x: &[f64]| {
            let s = x[0].sin();
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                r0 * r0,
                r0 * r0 * s * s,
            ]))
        });
        MetricChart::new("sphere", domain, metric, DerivMode::FiniteDifference, 1e-5, false)
    }

    /// Warped product g = dr^2 + (r + a r^3)^2 dθ^2 on r in (0, r_max).
    pub fn warped(a: f64, r_max: f64) -> Self {
        let domain = Domain {
            lo: vec![0.0, 0.0],
            hi: vec![r_max, 2.0 * std::f64::consts::PI],
            periodic: vec![false, true],
        };
        let metric: MetricFn = Arc::new(move |x: &[f64]| {
            let w = x[0] + a * x[0] * x[0] * x[0];
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, w * w]))
        });
        MetricChart::new("warped", domain, metric, DerivMode::FiniteDifference, 1e-5, false)
    }

    /// Evaluate the metric, wrapping periodic coordinates first.
    pub fn metric_at(&self, x: &[f64]) -> DMatrix<f64> {
        let mut p = x.to_vec();
        self.wrap(&mut p);
        (self.metric)(&p)
    }

    /// Inverse metric, guarding against chart degeneracy.
    pub fn metric_inv_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.metric_at(x);
        invert_spd(&g, x)
    }

    /// d g / d x_k, fourth-order accurate (or the analytic callback).
    pub fn dmetric(&self, x: &[f64], k: usize) -> DMatrix<f64> {
        if let DerivMode::Analytic(dg) = &self.deriv_mode {
            let mut p = x.to_vec();
            self.wrap(&mut p);
            return dg(&p, k);
        }
        self.fd_dmetric(x, k, self.fd_step)
    }

    fn fd_dmetric(&self, x: &[f64], k: usize, h: f64) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.dim, self.dim);
        let mut p = x.to_vec();
        for (o, w) in D1_OFFS.iter().zip(D1_W.iter()) {
            p.copy_from_slice(x);
            p[k] += *o as f64 * h;
            acc += self.metric_at(&p) * *w;
        }
        acc / h
    }

    /// Wrap periodic coordinates into the fundamental interval.
    pub fn wrap(&self, x: &mut [f64]) {
        for k in 0..self.dim {
            if self.domain.periodic[k] {
                let period = self.domain.period(k);
                let lo = self.domain.lo[k];
                x[k] = (x[k] - lo).rem_euclid(period) + lo;
            }
        }
    }

    /// Coordinate difference a - b, taking the shortest representative on
    /// periodic axes.
    pub fn delta(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        for k in 0..self.dim {
            if self.domain.periodic[k] {
                let period = self.domain.period(k);
                d[k] -= (d[k] / period).round() * period;
            }
        }
        d
    }

    /// Require x to sit inside the domain with the given margin on
    /// non-periodic axes.
    pub fn require_margin(&self, x: &[f64], margin: f64) -> Result<()> {
        for k in 0..self.dim {
            if self.domain.periodic[k] {
                continue;
            }
            if x[k] < self.domain.lo[k] + margin || x[k] > self.domain.hi[k] - margin {
                return Err(Error::OutOfDomain { point: x.to_vec(), margin });
            }
        }
        Ok(())
    }

    /// Levi-Civita connection coefficients at x.
    pub fn christoffel(&self, x: &[f64]) -> Result<Christoffel> {
        if self.flat {
            return Ok(Christoffel::zeros(self.dim));
        }
        self.require_margin(x, 2.0 * self.fd_step)?;
        let d = self.dim;
        let ginv = self.metric_inv_at(x)?;
        let dg: Vec<DMatrix<f64>> = (0..d).map(|k| self.dmetric(x, k)).collect();
        let mut gamma = Christoffel::zeros(d);
        for k in 0..d {
            for i in 0..d {
                for j in i..d {
                    let mut s = 0.0;
                    for l in 0..d {
                        s += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                    }
                    let v = 0.5 * s;
                    gamma.set(k, i, j, v);
                    gamma.set(k, j, i, v);
                }
            }
        }
        Ok(gamma)
    }

    /// Full curvature data: Riemann tensor, its covariant derivative and the
    /// pointwise norm ||∇R||.
    pub fn curvature(&self, x: &[f64]) -> Result<CurvatureData> {
        let d = self.dim;
        let g = self.metric_at(x);
        let ginv = invert_spd(&g, x)?;
        if self.flat {
            return Ok(CurvatureData {
                point: x.to_vec(),
                christoffel: Christoffel::zeros(d),
                riemann: vec![0.0; d * d * d * d],
                nabla_riemann: vec![0.0; d * d * d * d * d],
                nabla_r_norm: 0.0,
                dim: d,
                metric: g,
                metric_inv: ginv,
            });
        }
        let h = HI_DERIV_STEP.max(self.fd_step);
        self.require_margin(x, 3.0 * h)?;
        let jet = self.metric_jet(x)?;
        let gamma = jet.christoffel();
        let dgamma = jet.dchristoffel();
        let d2gamma = jet.d2christoffel();

        // R^l_ijk = d_i Γ^l_jk - d_j Γ^l_ik + Γ^l_im Γ^m_jk - Γ^l_jm Γ^m_ik
        let idx4 = |l: usize, i: usize, j: usize, k: usize| ((l * d + i) * d + j) * d + k;
        let mut riem = vec![0.0; d * d * d * d];
        for l in 0..d {
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        let mut v = dgamma[i].get(l, j, k) - dgamma[j].get(l, i, k);
                        for m in 0..d {
                            v += gamma.get(l, i, m) * gamma.get(m, j, k)
                                - gamma.get(l, j, m) * gamma.get(m, i, k);
                        }
                        riem[idx4(l, i, j, k)] = v;
                    }
                }
            }
        }

        // Partial derivative of R, then covariantize.
        let idx5 =
            |m: usize, l: usize, i: usize, j: usize, k: usize| (((m * d + l) * d + i) * d + j) * d + k;
        let mut nabla = vec![0.0; d * d * d * d * d];
        for m in 0..d {
            for l in 0..d {
                for i in 0..d {
                    for j in 0..d {
                        for k in 0..d {
                            let mut v = d2gamma[m][i].get(l, j, k) - d2gamma[m][j].get(l, i, k);
                            for a in 0..d {
                                v += dgamma[m].get(l, i, a) * gamma.get(a, j, k)
                                    + gamma.get(l, i, a) * dgamma[m].get(a, j, k)
                                    - dgamma[m].get(l, j, a) * gamma.get(a, i, k)
                                    - gamma.get(l, j, a) * dgamma[m].get(a, i, k);
                            }
                            // dR assembled; add the connection terms.
                            let r = |l2, i2, j2, k2| riem[idx4(l2, i2, j2, k2)];
                            for a in 0..d {
                                v += gamma.get(l, m, a) * r(a, i, j, k);
                                v -= gamma.get(a, m, i) * r(l, a, j, k);
                                v -= gamma.get(a, m, j) * r(l, i, a, k);
                                v -= gamma.get(a, m, k) * r(l, i, j, a);
                            }
                            nabla[idx5(m, l, i, j, k)] = v;
                        }
                    }
                }
            }
        }

        // ||∇R||^2 with all indices measured by g: lower the upper slot,
        // then contract against the fully raised copy.
        let mut norm2 = 0.0;
        for m in 0..d {
            for l in 0..d {
                for i in 0..d {
                    for j in 0..d {
                        for k in 0..d {
                            let mut low = 0.0;
                            for a in 0..d {
                                low += g[(l, a)] * nabla[idx5(m, a, i, j, k)];
                            }
                            let mut up = 0.0;
                            for (m2, l2, i2, j2, k2) in iter5(d) {
                                up += ginv[(m, m2)]
                                    * ginv[(i, i2)]
                                    * ginv[(j, j2)]
                                    * ginv[(k, k2)]
                                    * g_raise(&ginv, l, l2)
                                    * {
                                        let mut lo2 = 0.0;
                                        for a in 0..d {
                                            lo2 += g[(l2, a)] * nabla[idx5(m2, a, i2, j2, k2)];
                                        }
                                        lo2
                                    };
                            }
                            norm2 += low * up;
                        }
                    }
                }
            }
        }
        let nabla_r_norm = norm2.max(0.0).sqrt();

        Ok(CurvatureData {
            point: x.to_vec(),
            christoffel: gamma,
            riemann: riem,
            nabla_riemann: nabla,
            nabla_r_norm,
            dim: d,
            metric: g,
            metric_inv: ginv,
        })
    }

    /// Max over samples of ||∇R||, plus a constancy diagnostic.
    pub fn ambient_l_estimate(&self, samples: &[Vec<f64>]) -> Result<LEstimate> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        let mut lmax = 0.0f64;
        let mut lmin = f64::INFINITY;
        for s in samples {
            let c = self.curvature(s)?;
            lmax = lmax.max(c.nabla_r_norm);
            lmin = lmin.min(c.nabla_r_norm);
        }
        let constancy_ratio = if lmax < 1e-12 { 1.0 } else { lmax / lmin.max(1e-300) };
        Ok(LEstimate { l_max: lmax, constancy_ratio })
    }

    /// Check the chart invariants at the given sample points: symmetry and
    /// positive definiteness of g, and (for analytic derivative callbacks)
    /// agreement with second-order centered differences to 10 * fd_step^2
    /// relative error.
    pub fn validate(&self, samples: &[Vec<f64>]) -> Result<()> {
        for s in samples {
            let g = self.metric_at(s);
            for i in 0..self.dim {
                for j in 0..self.dim {
                    if (g[(i, j)] - g[(j, i)]).abs() > 1e-12 * (1.0 + g[(i, j)].abs()) {
                        return Err(Error::ScenarioInvalid(format!(
                            "metric not symmetric at {s:?} in chart '{}'",
                            self.name
                        )));
                    }
                }
            }
            let eig = g.clone().symmetric_eigenvalues();
            if eig.iter().any(|&e| e <= 0.0) {
                return Err(Error::DegenerateMetric { point: s.clone(), cond: f64::INFINITY });
            }
            if let DerivMode::Analytic(dg) = &self.deriv_mode {
                let h = self.fd_step;
                for k in 0..self.dim {
                    let ana = dg(s, k);
                    let mut p = s.clone();
                    p[k] += h;
                    let gp = self.metric_at(&p);
                    p[k] -= 2.0 * h;
                    let gm = self.metric_at(&p);
                    let fd = (gp - gm) / (2.0 * h);
                    let scale = ana.amax().max(1.0);
                    if (ana - fd).amax() > 10.0 * h * h * scale {
                        return Err(Error::ScenarioInvalid(format!(
                            "analytic metric derivative disagrees with finite differences \
                             at {s:?}, axis {k}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Metric with all derivatives up to third order at x, from 4th-order
    /// centered stencils applied directly to the metric callback.
    fn metric_jet(&self, x: &[f64]) -> Result<MetricJet> {
        let d = self.dim;
        let h = HI_DERIV_STEP.max(self.fd_step);
        let eval = |p: &[f64]| self.metric_at(p);
        let g = eval(x);
        let ginv = invert_spd(&g, x)?;

        let dg: Vec<DMatrix<f64>> = (0..d).map(|k| self.dmetric(x, k)).collect();

        let mut d2g = vec![vec![DMatrix::zeros(d, d); d]; d];
        let mut p = x.to_vec();
        for a in 0..d {
            // pure second derivative
            let mut acc = DMatrix::zeros(d, d);
            for (o, w) in D2_OFFS.iter().zip(D2_W.iter()) {
                p.copy_from_slice(x);
                p[a] += *o as f64 * h;
                acc += eval(&p) * *w;
            }
            d2g[a][a] = acc / (h * h);
            // mixed second derivatives
            for b in (a + 1)..d {
                let mut acc = DMatrix::zeros(d, d);
                for (oa, wa) in D1_OFFS.iter().zip(D1_W.iter()) {
                    for (ob, wb) in D1_OFFS.iter().zip(D1_W.iter()) {
                        p.copy_from_slice(x);
                        p[a] += *oa as f64 * h;
                        p[b] += *ob as f64 * h;
                        acc += eval(&p) * (wa * wb);
                    }
                }
                let m = acc / (h * h);
                d2g[a][b] = m.clone();
                d2g[b][a] = m;
            }
        }

        let mut d3g = vec![vec![vec![DMatrix::zeros(d, d); d]; d]; d];
        for a in 0..d {
            for b in a..d {
                for c in b..d {
                    let m = if a == b && b == c {
                        let mut acc = DMatrix::zeros(d, d);
                        for (o, w) in D3_OFFS.iter().zip(D3_W.iter()) {
                            p.copy_from_slice(x);
                            p[a] += *o as f64 * h;
                            acc += eval(&p) * *w;
                        }
                        acc / (h * h * h)
                    } else if a == b {
                        // d^2/da^2 then d/dc
                        let mut acc = DMatrix::zeros(d, d);
                        for (oa, wa) in D2_OFFS.iter().zip(D2_W.iter()) {
                            for (oc, wc) in D1_OFFS.iter().zip(D1_W.iter()) {
                                p.copy_from_slice(x);
                                p[a] += *oa as f64 * h;
                                p[c] += *oc as f64 * h;
                                acc += eval(&p) * (wa * wc);
                            }
                        }
                        acc / (h * h * h)
                    } else if b == c {
                        let mut acc = DMatrix::zeros(d, d);
                        for (ob, wb) in D2_OFFS.iter().zip(D2_W.iter()) {
                            for (oa, wa) in D1_OFFS.iter().zip(D1_W.iter()) {
                                p.copy_from_slice(x);
                                p[b] += *ob as f64 * h;
                                p[a] += *oa as f64 * h;
                                acc += eval(&p) * (wb * wa);
                            }
                        }
                        acc / (h * h * h)
                    } else {
                        let mut acc = DMatrix::zeros(d, d);
                        for (oa, wa) in D1_OFFS.iter().zip(D1_W.iter()) {
                            for (ob, wb) in D1_OFFS.iter().zip(D1_W.iter()) {
                                for (oc, wc) in D1_OFFS.iter().zip(D1_W.iter()) {
                                    p.copy_from_slice(x);
                                    p[a] += *oa as f64 * h;
                                    p[b] += *ob as f64 * h;
                                    p[c] += *oc as f64 * h;
                                    acc += eval(&p) * (wa * wb * wc);
                                }
                            }
                        }
                        acc / (h * h * h)
                    };
                    // symmetrize over all permutations of (a, b, c)
                    for perm in permutations3(a, b, c) {
                        d3g[perm.0][perm.1][perm.2] = m.clone();
                    }
                }
            }
        }

        let _ = g;
        Ok(MetricJet { dim: d, ginv, dg, d2g, d3g })
    }
}

/// Metric and derivatives up to order three at a single point.
struct MetricJet {
    dim: usize,
    ginv: DMatrix<f64>,
    dg: Vec<DMatrix<f64>>,
    d2g: Vec<Vec<DMatrix<f64>>>,
    d3g: Vec<Vec<Vec<DMatrix<f64>>>>,
}

impl MetricJet {
    /// d g^{-1} / d x_a = -g^{-1} (d_a g) g^{-1}
    fn dginv(&self, a: usize) -> DMatrix<f64> {
        -(&self.ginv * &self.dg[a] * &self.ginv)
    }

    fn d2ginv(&self, a: usize, b: usize) -> DMatrix<f64> {
        let gi = &self.ginv;
        gi * &self.dg[a] * gi * &self.dg[b] * gi + gi * &self.dg[b] * gi * &self.dg[a] * gi
            - gi * &self.d2g[a][b] * gi
    }

    fn christoffel(&self) -> Christoffel {
        let d = self.dim;
        let mut gamma = Christoffel::zeros(d);
        for k in 0..d {
            for i in 0..d {
                for j in i..d {
                    let mut s = 0.0;
                    for l in 0..d {
                        s += self.ginv[(k, l)]
                            * (self.dg[i][(j, l)] + self.dg[j][(i, l)] - self.dg[l][(i, j)]);
                    }
                    gamma.set(k, i, j, 0.5 * s);
                    gamma.set(k, j, i, 0.5 * s);
                }
            }
        }
        gamma
    }

    /// d_m Γ^k_ij for each m.
    fn dchristoffel(&self) -> Vec<Christoffel> {
        let d = self.dim;
        (0..d)
            .map(|m| {
                let dgi = self.dginv(m);
                let mut out = Christoffel::zeros(d);
                for k in 0..d {
                    for i in 0..d {
                        for j in i..d {
                            let mut s = 0.0;
                            for l in 0..d {
                                s += dgi[(k, l)]
                                    * (self.dg[i][(j, l)] + self.dg[j][(i, l)]
                                        - self.dg[l][(i, j)]);
                                s += self.ginv[(k, l)]
                                    * (self.d2g[m][i][(j, l)] + self.d2g[m][j][(i, l)]
                                        - self.d2g[m][l][(i, j)]);
                            }
                            out.set(k, i, j, 0.5 * s);
                            out.set(k, j, i, 0.5 * s);
                        }
                    }
                }
                out
            })
            .collect()
    }

    /// d_n d_m Γ^k_ij for each (n, m).
    fn d2christoffel(&self) -> Vec<Vec<Christoffel>> {
        let d = self.dim;
        (0..d)
            .map(|n| {
                (0..d)
                    .map(|m| {
                        let dgi_m = self.dginv(m);
                        let dgi_n = self.dginv(n);
                        let d2gi = self.d2ginv(n, m);
                        let mut out = Christoffel::zeros(d);
                        for k in 0..d {
                            for i in 0..d {
                                for j in i..d {
                                    let mut s = 0.0;
                                    for l in 0..d {
                                        let t1 = self.dg[i][(j, l)] + self.dg[j][(i, l)]
                                            - self.dg[l][(i, j)];
                                        let t1m = self.d2g[m][i][(j, l)]
                                            + self.d2g[m][j][(i, l)]
                                            - self.d2g[m][l][(i, j)];
                                        let t1n = self.d2g[n][i][(j, l)]
                                            + self.d2g[n][j][(i, l)]
                                            - self.d2g[n][l][(i, j)];
                                        let t1nm = self.d3g[n][m][i][(j, l)]
                                            + self.d3g[n][m][j][(i, l)]
                                            - self.d3g[n][m][l][(i, j)];
                                        s += d2gi[(k, l)] * t1
                                            + dgi_m[(k, l)] * t1n
                                            + dgi_n[(k, l)] * t1m
                                            + self.ginv[(k, l)] * t1nm;
                                    }
                                    out.set(k, i, j, 0.5 * s);
                                    out.set(k, j, i, 0.5 * s);
                                }
                            }
                        }
                        out
                    })
                    .collect()
            })
            .collect()
    }
}

fn invert_spd(g: &DMatrix<f64>, x: &[f64]) -> Result<DMatrix<f64>> {
    let eig = g.clone().symmetric_eigenvalues();
    let emax = eig.iter().cloned().fold(f64::MIN, f64::max);
    let emin = eig.iter().cloned().fold(f64::MAX, f64::min);
    if emin <= 0.0 || emax / emin > DEGENERACY_COND {
        return Err(Error::DegenerateMetric {
            point: x.to_vec(),
            cond: if emin <= 0.0 { f64::INFINITY } else { emax / emin },
        });
    }
    g.clone()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateMetric { point: x.to_vec(), cond: f64::INFINITY })
}

fn g_raise(ginv: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    ginv[(a, b)]
}

fn iter5(d: usize) -> impl Iterator<Item = (usize, usize, usize, usize, usize)> {
    (0..d.pow(5)).map(move |n| {
        let k = n % d;
        let j = (n / d) % d;
        let i = (n / (d * d)) % d;
        let l = (n / (d * d * d)) % d;
        let m = n / (d * d * d * d);
        (m, l, i, j, k)
    })
}

fn permutations3(a: usize, b: usize, c: usize) -> [(usize, usize, usize); 6] {
    [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
}
