//! Ridge-regularized projection of a parameter drift onto the publicly
//! visible subspace.
//!
//! The public channel's Jacobian `J` stacks the public-block logit
//! Jacobians of every public input. The reconstruction solves
//! `(JᵀJ + λI)·Δθ_pub = JᵀJ·Δθ` by conjugate gradient, with `JᵀJ·v`
//! realized matrix-free as a sum of VJP(mask(JVP(v))) over inputs, so the
//! Jacobian is never materialized. A dense Cholesky oracle covers the
//! small instances used for validation.

use std::ops::Range;

use rayon::prelude::*;

use crate::linalg;
use crate::model::Model;

use super::{ChiReport, DiagError};

/// Where and through what a public observer looks: a model at a fixed
/// evaluation point, a set of public inputs, and the public logit block.
pub struct PublicChannelSpec<'a> {
    pub model: &'a dyn Model,
    pub params: &'a [f64],
    pub public_inputs: &'a [Vec<f64>],
    pub block: Range<usize>,
}

const INPUT_CHUNK: usize = 4;

impl PublicChannelSpec<'_> {
    /// `JᵀJ·v` summed over public inputs, fixed-order chunked reduction.
    pub fn normal_apply(&self, v: &[f64]) -> Vec<f64> {
        let prepared = self.model.prepare(self.params);
        let partials: Vec<Vec<f64>> = self
            .public_inputs
            .par_chunks(INPUT_CHUNK)
            .map(|chunk| {
                let mut acc = vec![0.0; v.len()];
                for input in chunk {
                    let term = prepared.normal_term(input, v, &self.block);
                    linalg::axpy(1.0, &term, &mut acc);
                }
                acc
            })
            .collect();
        let mut out = vec![0.0; v.len()];
        for p in &partials {
            linalg::axpy(1.0, p, &mut out);
        }
        out
    }
}

/// Conjugate gradient for `(JᵀJ + λI)x = JᵀJ·drift`.
///
/// Non-convergence is reported through `cg_converged`, never silently
/// accepted; the partial iterate is still returned for inspection.
pub fn public_reconstruction(
    spec: &PublicChannelSpec<'_>,
    drift: &[f64],
    lambda: f64,
    cg_tol: f64,
    cg_max_iters: usize,
) -> Result<ChiReport, DiagError> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(DiagError::BadLambda(lambda));
    }
    if !linalg::all_finite(drift) {
        return Err(DiagError::NonFinite("drift"));
    }
    if drift.len() != spec.params.len() {
        return Err(DiagError::LayoutMismatch {
            got: drift.len(),
            want: spec.params.len(),
        });
    }

    let b = spec.normal_apply(drift);
    let b_norm = linalg::norm2(&b);
    let mut x = vec![0.0; drift.len()];
    let mut iters = 0;
    let mut rel = 0.0;
    let mut converged = true;

    if b_norm > 0.0 {
        let mut r = b.clone();
        let mut p = r.clone();
        let mut rs = linalg::dot(&r, &r);
        converged = false;
        while iters < cg_max_iters {
            let mut ap = spec.normal_apply(&p);
            linalg::axpy(lambda, &p, &mut ap);
            let denom = linalg::dot(&p, &ap);
            if denom <= 0.0 {
                // SPD system: this only happens when p vanished, i.e. r = 0.
                converged = true;
                break;
            }
            let alpha = rs / denom;
            linalg::axpy(alpha, &p, &mut x);
            linalg::axpy(-alpha, &ap, &mut r);
            let rs_new = linalg::dot(&r, &r);
            iters += 1;
            rel = rs_new.sqrt() / b_norm;
            if rel <= cg_tol {
                converged = true;
                break;
            }
            let beta = rs_new / rs;
            for (pi, ri) in p.iter_mut().zip(&r) {
                *pi = ri + beta * *pi;
            }
            rs = rs_new;
        }
    }

    Ok(ChiReport {
        delta_theta_pub: x,
        chi: None,
        norm_visibility: None,
        cg_iters: iters,
        cg_residual: rel,
        cg_converged: converged,
        lambda,
        probe_size: spec.public_inputs.len(),
    })
}

fn cholesky_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            if i == j {
                assert!(s > 0.0, "matrix not positive definite");
                a[i][i] = s.sqrt();
            } else {
                a[i][j] = s / a[j][j];
            }
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i][k] * b[k];
        }
        b[i] = s / a[i][i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k][i] * b[k];
        }
        b[i] = s / a[i][i];
    }
    b
}

/// Direct solve of `(JᵀJ + λI)x = JᵀJ·drift` on an explicit `J`.
pub fn dense_ridge_oracle(j: &[Vec<f64>], drift: &[f64], lambda: f64) -> Vec<f64> {
    let p = drift.len();
    let mut a = vec![vec![0.0; p]; p];
    for row in j {
        assert_eq!(row.len(), p, "jacobian row length");
        for (i, &ri) in row.iter().enumerate() {
            for (k, &rk) in row.iter().enumerate() {
                a[i][k] += ri * rk;
            }
        }
    }
    let mut rhs = vec![0.0; p];
    for (i, r) in a.iter().enumerate() {
        rhs[i] = linalg::dot(r, drift);
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += lambda;
    }
    cholesky_solve(a, rhs)
}

/// The same projection in dual form, `Jᵀ(JJᵀ + λI)⁻¹J·drift`.
pub fn dense_ridge_dual(j: &[Vec<f64>], drift: &[f64], lambda: f64) -> Vec<f64> {
    let rows = j.len();
    let mut k = vec![vec![0.0; rows]; rows];
    for (a, ra) in j.iter().enumerate() {
        for (b, rb) in j.iter().enumerate() {
            k[a][b] = linalg::dot(ra, rb);
        }
        k[a][a] += lambda;
    }
    let jd: Vec<f64> = j.iter().map(|r| linalg::dot(r, drift)).collect();
    let y = cholesky_solve(k, jd);
    let mut x = vec![0.0; drift.len()];
    for (row, &yi) in j.iter().zip(&y) {
        linalg::axpy(yi, row, &mut x);
    }
    x
}
