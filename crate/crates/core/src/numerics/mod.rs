// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense linear algebra, deterministic randomness, and verification
//! primitives used by every other module.
//!
//! Matrices are plain `ndarray::Array2<f64>` in double precision; the theory
//! this crate reproduces separates signals by factors of `exp(C)`, so f64 is
//! ample. Everything here is pure: given the same inputs (and the same
//! [`RandomStream`] seed) the outputs are bit-identical.

mod rng;

pub use rng::RandomStream;

use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView1};

/// Dense column-major-in-spirit matrix of `f64`. Rows index the embedding
/// dimension unless documented otherwise.
pub type Matrix = Array2<f64>;

/// `d x n` matrix whose columns are i.i.d. uniform draws from the unit sphere
/// in `R^d`. Columns are filled in order; each column draws `d` standard
/// normals (row order) and is then normalized.
pub fn sample_unit_sphere(d: usize, n: usize, rng: &mut RandomStream) -> Result<Matrix> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidDimension(format!(
            "sample_unit_sphere needs d >= 1 and n >= 1, got d={d}, n={n}"
        )));
    }
    let mut m = Matrix::zeros((d, n));
    for j in 0..n {
        loop {
            let mut norm_sq = 0.0;
            for i in 0..d {
                let v = rng.standard_normal();
                m[[i, j]] = v;
                norm_sq += v * v;
            }
            // a zero vector is unnormalizable; redraw (probability ~0)
            if norm_sq > 0.0 {
                let inv = 1.0 / norm_sq.sqrt();
                for i in 0..d {
                    m[[i, j]] *= inv;
                }
                break;
            }
        }
    }
    Ok(m)
}

/// `d x n` matrix whose columns are the first `n` standard basis vectors, so
/// the Gram matrix is exactly the identity.
pub fn orthonormal_basis(d: usize, n: usize) -> Result<Matrix> {
    if n > d {
        return Err(Error::Capacity {
            what: "orthonormal_basis",
            required: n,
            got: d,
        });
    }
    let mut m = Matrix::zeros((d, n));
    for j in 0..n {
        m[[j, j]] = 1.0;
    }
    Ok(m)
}

/// Masked softmax over a score column. Denied positions act as score `-inf`
/// and come out exactly `0.0`; allowed positions are normalized with the
/// usual max-subtraction for stability.
pub fn softmax_masked(scores: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    assert_eq!(scores.len(), mask.len(), "scores/mask length mismatch");
    let mut max = f64::NEG_INFINITY;
    for (s, &allow) in scores.iter().zip(mask) {
        if allow && *s > max {
            max = *s;
        }
    }
    if max == f64::NEG_INFINITY {
        return Err(Error::EmptySupport);
    }
    let mut out = vec![0.0; scores.len()];
    let mut sum = 0.0;
    for (i, (s, &allow)) in scores.iter().zip(mask).enumerate() {
        if allow {
            let e = (s - max).exp();
            out[i] = e;
            sum += e;
        }
    }
    for v in &mut out {
        *v /= sum;
    }
    Ok(out)
}

/// Softmax with every position allowed.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    softmax_masked(scores, &vec![true; scores.len()]).expect("non-empty support")
}

/// Index of the largest entry; ties are broken by the lowest index.
pub fn argmax_lowest(xs: &[f64]) -> usize {
    assert!(!xs.is_empty());
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Central-difference gradient of a scalar loss with respect to a matrix:
/// entry `(i, j)` is `(loss(X + h e_ij) - loss(X - h e_ij)) / (2 h)`.
///
/// This is the independent oracle used to verify analytic gradient formulas;
/// it must stay free of any knowledge of the losses it checks.
pub fn finite_diff_grad<F>(mut loss: F, at: &Matrix, step: f64) -> Result<Matrix>
where
    F: FnMut(&Matrix) -> f64,
{
    assert!(step > 0.0, "step must be positive");
    let (rows, cols) = at.dim();
    let mut grad = Matrix::zeros((rows, cols));
    let mut probe = at.clone();
    for i in 0..rows {
        for j in 0..cols {
            let orig = probe[[i, j]];
            probe[[i, j]] = orig + step;
            let up = loss(&probe);
            probe[[i, j]] = orig - step;
            let down = loss(&probe);
            probe[[i, j]] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::NonFinite(format!(
                    "finite_diff_grad loss at entry ({i}, {j})"
                )));
            }
            grad[[i, j]] = (up - down) / (2.0 * step);
        }
    }
    Ok(grad)
}

/// `target += scale * u v^T` without allocating the outer product.
pub fn outer_add(target: &mut Matrix, scale: f64, u: ArrayView1<f64>, v: ArrayView1<f64>) {
    debug_assert_eq!(target.nrows(), u.len());
    debug_assert_eq!(target.ncols(), v.len());
    for (i, ui) in u.iter().enumerate() {
        let s = scale * ui;
        if s == 0.0 {
            continue;
        }
        let mut row = target.row_mut(i);
        for (j, vj) in v.iter().enumerate() {
            row[j] += s * vj;
        }
    }
}

/// True when every entry is finite.
pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}
