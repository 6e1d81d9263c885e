//! The seven-term curvature coupling tensor on the horizontal distribution
//! and its vanishing-trace identity.
//!
//! Inputs are frame components over an orthonormal frame (e_1..e_n horizontal
//! followed by f_1..f_k vertical); every term is linear in (h, ∇h) and
//! carries at least one fundamental-tensor factor, so the tensor vanishes
//! identically on translation models.

use crate::error::{Error, Result};

/// Frame components feeding the evaluation.
#[derive(Clone, Debug)]
pub struct CalRInputs {
    /// Horizontal dimension n.
    pub dim_h: usize,
    /// Vertical dimension k.
    pub dim_v: usize,
    /// h(a, b): symmetric (n+k) x (n+k), row-major.
    pub h: Vec<f64>,
    /// (∇_{e_i} h)(a, b): n blocks of (n+k)².
    pub grad_h: Vec<f64>,
    /// A_{e_i} f_a, component b: indexed [i][b][a] (each block is the matrix
    /// of the operator A_{e_i} acting on frame vectors).
    pub a_op: Vec<f64>,
    /// (∇_{e_i} A)_{e_i} f_a, component b: same layout as one a_op block per i.
    pub grad_a: Vec<f64>,
}

impl CalRInputs {
    fn m(&self) -> usize {
        self.dim_h + self.dim_v
    }

    pub fn zeros(dim_h: usize, dim_v: usize) -> Self {
        let m = dim_h + dim_v;
        CalRInputs {
            dim_h,
            dim_v,
            h: vec![0.0; m * m],
            grad_h: vec![0.0; dim_h * m * m],
            a_op: vec![0.0; dim_h * m * m],
            grad_a: vec![0.0; dim_h * m * m],
        }
    }

    fn check(&self) -> Result<()> {
        let m = self.m();
        if self.dim_h == 0 {
            return Err(Error::FrameMismatch("horizontal dimension must be >= 1".into()));
        }
        if self.h.len() != m * m
            || self.grad_h.len() != self.dim_h * m * m
            || self.a_op.len() != self.dim_h * m * m
            || self.grad_a.len() != self.dim_h * m * m
        {
            return Err(Error::FrameMismatch(format!(
                "expected blocks of {}x{} over {} horizontal directions",
                m, m, self.dim_h
            )));
        }
        Ok(())
    }

    #[inline]
    fn h_at(&self, a: usize, b: usize) -> f64 {
        self.h[a * self.m() + b]
    }

    #[inline]
    fn grad_h_at(&self, i: usize, a: usize, b: usize) -> f64 {
        let m = self.m();
        self.grad_h[i * m * m + a * m + b]
    }

    /// Apply A_{e_i} to a frame vector.
    fn apply_a(&self, i: usize, v: &[f64]) -> Vec<f64> {
        let m = self.m();
        let blk = &self.a_op[i * m * m..(i + 1) * m * m];
        (0..m).map(|b| (0..m).map(|a| blk[b * m + a] * v[a]).sum()).collect()
    }

    fn apply_grad_a(&self, i: usize, v: &[f64]) -> Vec<f64> {
        let m = self.m();
        let blk = &self.grad_a[i * m * m..(i + 1) * m * m];
        (0..m).map(|b| (0..m).map(|a| blk[b * m + a] * v[a]).sum()).collect()
    }

    fn h_of(&self, u: &[f64], v: &[f64]) -> f64 {
        let m = self.m();
        let mut s = 0.0;
        for a in 0..m {
            for b in 0..m {
                s += self.h_at(a, b) * u[a] * v[b];
            }
        }
        s
    }

    fn grad_h_of(&self, i: usize, u: &[f64], v: &[f64]) -> f64 {
        let m = self.m();
        let mut s = 0.0;
        for a in 0..m {
            for b in 0..m {
                s += self.grad_h_at(i, a, b) * u[a] * v[b];
            }
        }
        s
    }
}

/// Evaluate the coupling tensor on the horizontal frame: an n x n symmetric
/// matrix R(e_p, e_q) assembled verbatim from the seven trace terms.
pub fn calr_eval(inp: &CalRInputs) -> Result<Vec<f64>> {
    inp.check()?;
    let n = inp.dim_h;
    let m = inp.m();
    let basis = |a: usize| -> Vec<f64> {
        let mut v = vec![0.0; m];
        v[a] = 1.0;
        v
    };
    let mut out = vec![0.0; n * n];
    for p in 0..n {
        for q in p..n {
            let ep = basis(p);
            let eq = basis(q);
            let mut acc = 0.0;
            for i in 0..n {
                let a_ep = inp.apply_a(i, &ep);
                let a_eq = inp.apply_a(i, &eq);
                let aa_ep = inp.apply_a(i, &a_ep);
                let aa_eq = inp.apply_a(i, &a_eq);
                let ga_ep = inp.apply_grad_a(i, &ep);
                let ga_eq = inp.apply_grad_a(i, &eq);
                acc += inp.h_of(&aa_ep, &eq) + inp.h_of(&aa_eq, &ep);
                acc += inp.h_of(&ga_ep, &eq) + inp.h_of(&ga_eq, &ep);
                acc += 2.0 * inp.grad_h_of(i, &a_ep, &eq) + 2.0 * inp.grad_h_of(i, &a_eq, &ep);
                acc += 2.0 * inp.h_of(&a_ep, &a_eq);
            }
            out[p * n + q] = acc;
            out[q * n + p] = acc;
        }
    }
    Ok(out)
}

/// Horizontal trace of the coupling tensor.  Zero on model-consistent inputs;
/// reported as a diagnostic (not asserted) on arbitrary synthetic inputs.
pub fn calr_trace_check(inp: &CalRInputs) -> Result<f64> {
    let r = calr_eval(inp)?;
    let n = inp.dim_h;
    Ok((0..n).map(|p| r[p * n + p]).sum())
}
