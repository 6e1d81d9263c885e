//! Riemannian submersion models: a flat total space with a vertical
//! distribution, the quotient projection, and the O'Neill fundamental
//! tensors computed from derivatives of the orthogonal projectors.
//!
//! The A tensor evaluated here is
//! `A_X Y = (D_{X_H} P_H Y)_V + (D_{X_H} P_V Y)_H`
//! which is tensorial in both slots because `P_V P_H = 0` kills the
//! extension-derivative terms; T is the same with a vertical differentiation
//! slot.  On a translation group model the projectors are constant, so both
//! tensors vanish to the last bit while still running the full code path.

use crate::chart::MetricChart;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

pub type ProjectionFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type VerticalBasisFn = Arc<dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubmersionKind {
    /// Vertical distribution spanned by constant coordinate directions;
    /// fibers are parallel affine subspaces (totally geodesic, T = 0).
    TranslationGroup,
    /// Arbitrary smooth vertical distribution on a flat total space.
    Abstract,
}

/// Flat total space fibered over a base chart.
#[derive(Clone)]
pub struct SubmersionModel {
    pub total_chart: MetricChart,
    pub base_chart: MetricChart,
    pub kind: SubmersionKind,
    /// Fiber dimension k.
    pub vertical_dim: usize,
    pub fd_step: f64,
    projection: ProjectionFn,
    vertical_basis: VerticalBasisFn,
}

impl SubmersionModel {
    /// The total chart must be flat Euclidean; curved total spaces are
    /// rejected at construction.
    pub fn new(
        total_chart: MetricChart,
        base_chart: MetricChart,
        kind: SubmersionKind,
        vertical_dim: usize,
        projection: ProjectionFn,
        vertical_basis: VerticalBasisFn,
    ) -> Result<Self> {
        if !total_chart.flat {
            return Err(Error::ScenarioInvalid(
                "submersion total space must be a flat Euclidean chart".into(),
            ));
        }
        if vertical_dim + base_chart.dim != total_chart.dim {
            return Err(Error::FrameMismatch(format!(
                "total dim {} != base dim {} + vertical dim {}",
                total_chart.dim, base_chart.dim, vertical_dim
            )));
        }
        Ok(SubmersionModel {
            total_chart,
            base_chart,
            kind,
            vertical_dim,
            fd_step: 1e-5,
            projection,
            vertical_basis,
        })
    }

    /// R^m -> R^(m-k) dropping the last k coordinates; fibers are the
    /// orbits of the translation group along those axes.
    pub fn translation(total_dim: usize, vertical_dim: usize) -> Self {
        let base_dim = total_dim - vertical_dim;
        let projection: ProjectionFn = Arc::new(move |x: &[f64]| x[..base_dim].to_vec());
        let vertical_basis: VerticalBasisFn = Arc::new(move |_x: &[f64]| {
            (0..vertical_dim)
                .map(|i| {
                    let mut v = vec![0.0; total_dim];
                    v[base_dim + i] = 1.0;
                    v
                })
                .collect()
        });
        SubmersionModel::new(
            MetricChart::euclidean(total_dim),
            MetricChart::euclidean(base_dim),
            SubmersionKind::TranslationGroup,
            vertical_dim,
            projection,
            vertical_basis,
        )
        .expect("translation model is always valid")
    }

    /// Screw motion on R^3: rotation around the z-axis coupled to a
    /// translation of pitch `c`.  The orbits are helices, the horizontal
    /// distribution is non-integrable, and both A and T are nonzero, which
    /// makes this the test model for the O'Neill tensors.  The base chart
    /// carries the quotient metric dρ² + ρ²c²/(c²+ρ²) dθ² in polar
    /// coordinates.
    pub fn screw(pitch: f64, rho_max: f64) -> Self {
        let c = pitch;
        let projection: ProjectionFn = Arc::new(move |x: &[f64]| {
            let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
            let theta = x[1].atan2(x[0]) - x[2] / c;
            vec![rho, theta.rem_euclid(2.0 * std::f64::consts::PI)]
        });
        let vertical_basis: VerticalBasisFn = Arc::new(move |x: &[f64]| {
            let n = (x[0] * x[0] + x[1] * x[1] + c * c).sqrt();
            vec![vec![-x[1] / n, x[0] / n, c / n]]
        });
        let base_metric: crate::chart::MetricFn = Arc::new(move |p: &[f64]| {
            let rho2 = p[0] * p[0];
            DMatrix::from_diagonal(&DVector::from_vec(vec![
                1.0,
                rho2 * c * c / (c * c + rho2),
            ]))
        });
        let base_chart = MetricChart::new(
            "screw-base",
            crate::chart::Domain {
                lo: vec![0.0, 0.0],
                hi: vec![rho_max, 2.0 * std::f64::consts::PI],
                periodic: vec![false, true],
            },
            base_metric,
            crate::chart::DerivMode::FiniteDifference,
            1e-5,
            false,
        );
        SubmersionModel::new(
            MetricChart::euclidean(3),
            base_chart,
            SubmersionKind::Abstract,
            1,
            projection,
            vertical_basis,
        )
        .expect("screw model is always valid")
    }

    pub fn total_dim(&self) -> usize {
        self.total_chart.dim
    }

    pub fn base_dim(&self) -> usize {
        self.base_chart.dim
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        (self.projection)(x)
    }

    /// Orthonormalized vertical frame at x.
    pub fn vertical_frame(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let raw = (self.vertical_basis)(x);
        gram_schmidt(raw)
    }

    /// Orthogonal projector onto the vertical distribution.
    pub fn vertical_projector(&self, x: &[f64]) -> DMatrix<f64> {
        let m = self.total_dim();
        let mut p = DMatrix::zeros(m, m);
        for v in self.vertical_frame(x) {
            for i in 0..m {
                for j in 0..m {
                    p[(i, j)] += v[i] * v[j];
                }
            }
        }
        p
    }

    pub fn horizontal_projector(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.total_dim(), self.total_dim()) - self.vertical_projector(x)
    }

    /// Differential of the projection at x (finite differences of the
    /// projection callback, with periodic base axes unwrapped).
    pub fn dprojection(&self, x: &[f64]) -> DMatrix<f64> {
        let m = self.total_dim();
        let b = self.base_dim();
        let h = self.fd_step;
        let base = self.project(x);
        let mut j = DMatrix::zeros(b, m);
        let mut p = x.to_vec();
        for col in 0..m {
            p.copy_from_slice(x);
            p[col] += h;
            let fp = self.project(&p);
            p[col] -= 2.0 * h;
            let fm = self.project(&p);
            let dp = self.base_chart.delta(&fp, &base);
            let dm = self.base_chart.delta(&fm, &base);
            for row in 0..b {
                j[(row, col)] = (dp[row] - dm[row]) / (2.0 * h);
            }
        }
        j
    }

    /// O'Neill tensor A_X Y at x.
    pub fn oneill_a(&self, x: &[f64], xv: &[f64], yv: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(x, xv, yv)?;
        let ph = self.horizontal_projector(x);
        let xh = &ph * DVector::from_column_slice(xv);
        self.oneill_from_direction(x, &xh, yv)
    }

    /// O'Neill tensor T_X Y at x (differentiation along the vertical part).
    pub fn oneill_t(&self, x: &[f64], xv: &[f64], yv: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(x, xv, yv)?;
        let pv = self.vertical_projector(x);
        let xvert = &pv * DVector::from_column_slice(xv);
        self.oneill_from_direction(x, &xvert, yv)
    }

    fn check_dims(&self, x: &[f64], xv: &[f64], yv: &[f64]) -> Result<()> {
        let m = self.total_dim();
        if x.len() != m || xv.len() != m || yv.len() != m {
            return Err(Error::FrameMismatch(format!(
                "expected vectors of dimension {m}, got {}, {}, {}",
                x.len(),
                xv.len(),
                yv.len()
            )));
        }
        Ok(())
    }

    /// (P_V - P_H) (D_dir P_H) Y, shared kernel of both fundamental tensors.
    fn oneill_from_direction(
        &self,
        x: &[f64],
        dir: &DVector<f64>,
        yv: &[f64],
    ) -> Result<Vec<f64>> {
        let m = self.total_dim();
        let norm = dir.norm();
        if norm < 1e-14 {
            return Ok(vec![0.0; m]);
        }
        let unit = dir / norm;
        let h = self.fd_step;
        // 4th-order centered difference of the horizontal projector field
        // along the unit direction; antisymmetric pairing keeps constant
        // projectors (translation models) at exactly zero.
        let mut p = vec![0.0; m];
        let mut sample = |o: f64| -> DMatrix<f64> {
            for i in 0..m {
                p[i] = x[i] + o * h * unit[i];
            }
            self.horizontal_projector(&p)
        };
        let d1 = sample(1.0) - sample(-1.0);
        let d2 = sample(2.0) - sample(-2.0);
        let dph = (d1 * (8.0 / 12.0) - d2 * (1.0 / 12.0)) / h;

        let y = DVector::from_column_slice(yv);
        let pv = self.vertical_projector(x);
        let ph = DMatrix::identity(m, m) - &pv;
        let dy = &dph * y;
        let out = (&pv * &dy - &ph * &dy) * norm;
        Ok(out.as_slice().to_vec())
    }

    /// Check the submersion invariants at sampled points:
    /// dπ annihilates the vertical frame, dπ is an isometry on horizontal
    /// vectors (against the base metric), and translation models have a
    /// constant vertical frame.
    pub fn validate(&self, samples: &[Vec<f64>], dirs_per_sample: usize) -> Result<()> {
        let m = self.total_dim();
        let mut frame0: Option<Vec<Vec<f64>>> = None;
        let mut lcg = 0x2545f4914f6cdd1du64;
        let mut unit = move || {
            lcg = lcg.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((lcg >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for x in samples {
            let dpi = self.dprojection(x);
            let gbar = self.base_chart.metric_at(&self.project(x));
            for v in self.vertical_frame(x) {
                let dv = &dpi * DVector::from_column_slice(&v);
                let n2 = (dv.transpose() * &gbar * &dv)[(0, 0)];
                if n2.sqrt() > 1e-8 {
                    return Err(Error::ScenarioInvalid(format!(
                        "dπ does not annihilate the vertical frame at {x:?} (|dπV| = {:.3e})",
                        n2.sqrt()
                    )));
                }
            }
            let ph = self.horizontal_projector(x);
            for _ in 0..dirs_per_sample {
                let raw = DVector::from_iterator(m, (0..m).map(|_| unit()));
                let xh = &ph * raw;
                let n = xh.norm();
                if n < 1e-8 {
                    continue;
                }
                let xh = xh / n;
                let dv = &dpi * &xh;
                let nb = (dv.transpose() * &gbar * &dv)[(0, 0)].sqrt();
                if (nb - 1.0).abs() > 1e-6 {
                    return Err(Error::ScenarioInvalid(format!(
                        "horizontal isometry fails at {x:?}: |dπX| = {nb:.9}"
                    )));
                }
            }
            if self.kind == SubmersionKind::TranslationGroup {
                let f = self.vertical_frame(x);
                match &frame0 {
                    None => frame0 = Some(f),
                    Some(f0) => {
                        for (a, b) in f0.iter().zip(f.iter()) {
                            for (u, v) in a.iter().zip(b.iter()) {
                                if (u - v).abs() > 1e-12 {
                                    return Err(Error::ScenarioInvalid(
                                        "translation model has non-constant vertical frame"
                                            .into(),
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Horizontal vector at x projecting onto the given base vector.
    pub fn horizontal_lift(&self, x: &[f64], vbar: &[f64]) -> Result<Vec<f64>> {
        let m = self.total_dim();
        let b = self.base_dim();
        if vbar.len() != b {
            return Err(Error::FrameMismatch(format!(
                "base vector has dimension {}, expected {b}",
                vbar.len()
            )));
        }
        let ph = self.horizontal_projector(x);
        // Orthonormal horizontal frame by projecting coordinate directions.
        let mut frame: Vec<DVector<f64>> = Vec::new();
        for i in 0..m {
            let mut e = DVector::zeros(m);
            e[i] = 1.0;
            let mut v = &ph * e;
            for f in &frame {
                let c = v.dot(f);
                v -= f * c;
            }
            let n = v.norm();
            if n > 1e-10 {
                frame.push(v / n);
            }
            if frame.len() == b {
                break;
            }
        }
        if frame.len() != b {
            return Err(Error::VerticalTangency { node: 0 });
        }
        let dpi = self.dprojection(x);
        let mut jh = DMatrix::zeros(b, b);
        for (col, f) in frame.iter().enumerate() {
            let img = &dpi * f;
            for row in 0..b {
                jh[(row, col)] = img[row];
            }
        }
        let rhs = DVector::from_column_slice(vbar);
        let coeffs = jh
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::LiftDivergence("singular horizontal Jacobian".into()))?;
        let mut out = DVector::zeros(m);
        for (c, f) in coeffs.iter().zip(frame.iter()) {
            out += f * *c;
        }
        Ok(out.as_slice().to_vec())
    }
}

fn gram_schmidt(raw: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(raw.len());
    for r in raw {
        let mut v = DVector::from_vec(r);
        for u in &out {
            let c = v.dot(u);
            v -= u * c;
        }
        let n = v.norm();
        if n > 1e-14 {
            out.push(v / n);
        }
    }
    out.into_iter().map(|v| v.as_slice().to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn translation_model_has_zero_fundamental_tensors() {
        let model = SubmersionModel::translation(3, 1);
        let x = [0.4, -1.2, 7.0];
        let cases = [
            ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]), // horizontal, horizontal
            ([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]), // horizontal, vertical
            ([0.0, 0.0, 1.0], [1.0, 0.0, 0.0]), // vertical, horizontal
        ];
        for (xv, yv) in cases {
            let a = model.oneill_a(&x, &xv, &yv).unwrap();
            let t = model.oneill_t(&x, &xv, &yv).unwrap();
            assert!(a.iter().all(|&c| c == 0.0), "A must vanish exactly");
            assert!(t.iter().all(|&c| c == 0.0), "T must vanish exactly");
        }
        model
            .validate(&[vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 3.0], vec![-5.0, 0.3, 9.9]], 10)
            .unwrap();
    }

    #[test]
    fn zero_horizontal_part_gives_zero_a() {
        let model = SubmersionModel::screw(1.0, 20.0);
        let x = [1.0, 0.5, 0.3];
        let v = model.vertical_frame(&x)[0].clone();
        let a = model.oneill_a(&x, &v, &[1.0, 0.0, 0.0]).unwrap();
        assert!(a.iter().all(|&c| c.abs() < 1e-12));
    }

    #[test]
    fn screw_model_is_a_riemannian_submersion() {
        let model = SubmersionModel::screw(1.0, 20.0);
        let samples: Vec<Vec<f64>> = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.5, 1.3, 2.0],
            vec![-2.0, 0.7, -1.0],
            vec![3.0, -1.0, 5.0],
        ];
        model.validate(&samples, 10).unwrap();
    }

    #[test]
    fn screw_a_tensor_is_skew_and_alternating() {
        let model = SubmersionModel::screw(1.0, 20.0);
        let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        for x in [[1.3, -0.4, 0.8], [0.7, 0.7, -2.0], [2.5, 0.1, 4.0]] {
            let ph = model.horizontal_projector(&x);
            let h1 = (&ph * DVector::from_column_slice(&[1.0, 0.2, -0.3])).as_slice().to_vec();
            let h2 = (&ph * DVector::from_column_slice(&[0.1, 1.0, 0.5])).as_slice().to_vec();
            // A_X is a skew-symmetric operator: <A_X E, F> = -<A_X F, E>.
            let es = [[1.0, 0.0, 0.0], [0.2, -0.7, 0.4]];
            let fs = [[0.0, 1.0, 0.3], [0.9, 0.1, -1.1]];
            for e in &es {
                for f in &fs {
                    let ae = model.oneill_a(&x, &h1, e).unwrap();
                    let af = model.oneill_a(&x, &h1, f).unwrap();
                    assert_abs_diff_eq!(dot(&ae, f), -dot(&af, e), epsilon = 1e-7);
                }
            }
            // On horizontal pairs A alternates: A_X Y = -A_Y X.
            let a12 = model.oneill_a(&x, &h1, &h2).unwrap();
            let a21 = model.oneill_a(&x, &h2, &h1).unwrap();
            for (p, q) in a12.iter().zip(a21.iter()) {
                assert_abs_diff_eq!(p, &-q, epsilon = 1e-7);
            }
            assert!(
                a12.iter().any(|&c| c.abs() > 1e-4),
                "screw model should have a nonzero A tensor"
            );
        }
    }

    #[test]
    fn oneill_matches_direct_definition_oracle() {
        // Oracle: second-order centered difference of the projected constant
        // extension fields, the definition verbatim.
        let model = SubmersionModel::screw(1.0, 20.0);
        let h = 1e-5;
        let oracle_a = |x: &[f64], xv: &[f64], yv: &[f64]| -> Vec<f64> {
            let m = 3;
            let ph = model.horizontal_projector(x);
            let pv = model.vertical_projector(x);
            let xh = &ph * DVector::from_column_slice(xv);
            let y = DVector::from_column_slice(yv);
            let mut p = vec![0.0; m];
            let field = |p: &[f64], y: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
                let phh = model.horizontal_projector(p);
                let pvv = model.vertical_projector(p);
                (&phh * y, &pvv * y)
            };
            for i in 0..m {
                p[i] = x[i] + h * xh[i];
            }
            let (yh_p, yv_p) = field(&p, &y);
            for i in 0..m {
                p[i] = x[i] - h * xh[i];
            }
            let (yh_m, yv_m) = field(&p, &y);
            let d_yh = (yh_p - yh_m) / (2.0 * h);
            let d_yv = (yv_p - yv_m) / (2.0 * h);
            let out = &pv * d_yh + &ph * d_yv;
            out.as_slice().to_vec()
        };
        for x in [[1.1, 0.3, -0.5], [0.4, -1.7, 2.2]] {
            let xv = [0.3, 0.9, -0.2];
            let yv = [1.0, -0.4, 0.6];
            let got = model.oneill_a(&x, &xv, &yv).unwrap();
            let want = oracle_a(&x, &xv, &yv);
            for (g, w) in got.iter().zip(want.iter()) {
                assert_abs_diff_eq!(g, w, epsilon = 10.0 * h * h + 1e-9);
            }
            // T likewise, differencing along the vertical part.
            let pv = model.vertical_projector(&x);
            let xvert = (&pv * DVector::from_column_slice(&xv)).as_slice().to_vec();
            let t_impl = model.oneill_t(&x, &xv, &yv).unwrap();
            let t_oracle = {
                // direct definition, differencing along the vertical part
                let m = 3;
                let ph = model.horizontal_projector(&x);
                let pvx = model.vertical_projector(&x);
                let y = DVector::from_column_slice(&yv);
                let mut p = vec![0.0; m];
                for i in 0..m {
                    p[i] = x[i] + h * xvert[i];
                }
                let yh_p = model.horizontal_projector(&p) * &y;
                let yv_p = model.vertical_projector(&p) * &y;
                for i in 0..m {
                    p[i] = x[i] - h * xvert[i];
                }
                let yh_m = model.horizontal_projector(&p) * &y;
                let yv_m = model.vertical_projector(&p) * &y;
                let d_yh = (yh_p - yh_m) / (2.0 * h);
                let d_yv = (yv_p - yv_m) / (2.0 * h);
                let out = &pvx * d_yh + &ph * d_yv;
                out.as_slice().to_vec()
            };
            for (g, w) in t_impl.iter().zip(t_oracle.iter()) {
                assert_abs_diff_eq!(g, w, epsilon = 10.0 * h * h + 1e-9);
            }
            assert!(t_impl.iter().any(|&c| c.abs() > 1e-4), "screw fibers are not geodesic");
        }
    }

    #[test]
    fn horizontal_lift_projects_back() {
        let model = SubmersionModel::screw(1.0, 20.0);
        let x = [1.2, 0.4, 0.9];
        let vbar = [0.3, -0.2];
        let lift = model.horizontal_lift(&x, &vbar).unwrap();
        let dpi = model.dprojection(&x);
        let img = &dpi * DVector::from_column_slice(&lift);
        assert_abs_diff_eq!(img[0], vbar[0], epsilon = 1e-7);
        assert_abs_diff_eq!(img[1], vbar[1], epsilon = 1e-7);
        let pv = model.vertical_projector(&x);
        let vert = &pv * DVector::from_column_slice(&lift);
        assert!(vert.norm() < 1e-9, "lift must be horizontal");
    }
}
