//! Dense kernels shared by every solver: SVD, the two proximal operators,
//! pseudo-inverse, ridge Gram inverse and matrix norms.
//!
//! [`Matrix`] is nalgebra's `DMatrix<f64>`, stored column-major. Samples are
//! columns throughout the crate, so one sample is one contiguous slice.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense column-major matrix of `f64`.
pub type Matrix = DMatrix<f64>;

/// Thin SVD, `a = u * diag(s) * vt`, with `s` non-increasing.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub u: Matrix,
    pub s: DVector<f64>,
    pub vt: Matrix,
}

impl SvdFactors {
    pub fn rank(&self, tol: f64) -> usize {
        self.s.iter().filter(|&&v| v > tol).count()
    }

    /// `u * diag(f(s)) * vt`.
    pub fn recompose_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let mut us = self.u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= f(self.s[j]);
        }
        us * &self.vt
    }
}

pub(crate) fn ensure_finite(op: &'static str, a: &Matrix) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numerical(op, "input contains NaN or infinite entries"))
    }
}

/// Thin singular value decomposition, computed sequentially by faer's
/// bidiagonalization-based solver.
///
/// nalgebra's own SVD is not used: its deflation tests compare against an
/// absolute epsilon and return wrong factors on a small fraction of
/// rank-deficient inputs, which are exactly what the thresholding steps see.
pub fn svd(a: &Matrix) -> Result<SvdFactors> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::param("a", "svd of an empty matrix"));
    }
    ensure_finite("svd", a)?;

    let fa = faer::MatRef::from_column_major_slice(a.as_slice(), m, n);
    let dec = fa
        .thin_svd()
        .map_err(|e| Error::numerical("svd", format!("no convergence on {m}x{n} input: {e:?}")))?;
    let (fu, fs, fv) = (dec.U(), dec.S().column_vector(), dec.V());
    let k = fs.nrows();

    let u = Matrix::from_fn(m, k, |i, j| fu[(i, j)]);
    let vt = Matrix::from_fn(k, n, |i, j| fv[(j, i)]);
    let s = DVector::from_fn(k, |i, _| fs[i]);
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("svd", "non-finite singular value"));
    }
    debug_assert!(s.as_slice().windows(2).all(|w| w[0] >= w[1]));
    Ok(SvdFactors { u, s, vt })
}

/// Singular value thresholding: the proximal operator of `tau * ||.||_*`.
pub fn svt(a: &Matrix, tau: f64) -> Result<Matrix> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::param("tau", format!("must be finite and >= 0, got {tau}")));
    }
    if a.is_empty() {
        return Ok(a.clone());
    }
    let f = svd(a)?;
    let kept = f.s.iter().take_while(|&&s| s > tau).count();
    if kept == 0 {
        return Ok(Matrix::zeros(a.nrows(), a.ncols()));
    }
    let mut u = f.u.columns(0, kept).into_owned();
    for (j, mut col) in u.column_iter_mut().enumerate() {
        col *= f.s[j] - tau;
    }
    Ok(u * f.vt.rows(0, kept))
}

/// Elementwise shrinkage `sign(x) * max(|x| - tau, 0)`: the proximal operator
/// of `tau * ||.||_1`.
pub fn soft_threshold(a: &Matrix, tau: f64) -> Result<Matrix> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::param("tau", format!("must be finite and >= 0, got {tau}")));
    }
    Ok(a.map(|x| shrink(x, tau)))
}

#[inline]
pub(crate) fn shrink(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// Default rank cut-off used by [`pseudo_inverse`]: `max(m, n) * eps * s_max`.
pub fn default_rank_tol(shape: (usize, usize), s_max: f64) -> f64 {
    shape.0.max(shape.1) as f64 * f64::EPSILON * s_max
}

/// Moore–Penrose inverse through the SVD. Singular values `<= rank_tol` are
/// treated as zero; `None` selects [`default_rank_tol`].
pub fn pseudo_inverse(a: &Matrix, rank_tol: Option<f64>) -> Result<Matrix> {
    let (m, n) = a.shape();
    if let Some(t) = rank_tol {
        if !(t >= 0.0) {
            return Err(Error::param("rank_tol", format!("must be >= 0, got {t}")));
        }
    }
    if m == 0 || n == 0 {
        return Ok(Matrix::zeros(n, m));
    }
    let f = svd(a)?;
    let s_max = f.s.get(0).copied().unwrap_or(0.0);
    let tol = rank_tol.unwrap_or_else(|| default_rank_tol((m, n), s_max));
    let kept = f.s.iter().take_while(|&&s| s > tol && s > 0.0).count();
    if kept == 0 {
        return Ok(Matrix::zeros(n, m));
    }
    // V * diag(1/s) * U^T on the retained block.
    let mut v = f.vt.rows(0, kept).transpose();
    for (j, mut col) in v.column_iter_mut().enumerate() {
        col /= f.s[j];
    }
    Ok(v * f.u.columns(0, kept).transpose())
}

/// `(F F^T + lambda I)^{-1}` via a Cholesky factorization.
pub fn ridge_gram_inverse(f: &Matrix, lambda: f64) -> Result<Matrix> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::param("lambda", format!("must be finite and > 0, got {lambda}")));
    }
    ensure_finite("ridge_gram_inverse", f)?;
    let m = f.nrows();
    let mut gram = f * f.transpose();
    for i in 0..m {
        gram[(i, i)] += lambda;
    }
    spd_inverse("ridge_gram_inverse", gram)
}

pub(crate) fn spd_inverse(op: &'static str, mut a: Matrix) -> Result<Matrix> {
    symmetrize(&mut a);
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::numerical(op, "matrix is not numerically positive definite"))?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

fn symmetrize(a: &mut Matrix) {
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub frobenius: f64,
    /// Sum of singular values.
    pub nuclear: f64,
    /// Entrywise sum of absolute values.
    pub l1: f64,
    /// Largest absolute entry.
    pub linf: f64,
}

pub fn norms(a: &Matrix) -> Result<Norms> {
    Ok(Norms {
        frobenius: a.norm(),
        nuclear: nuclear_norm(a)?,
        l1: l1_norm(a),
        linf: linf_norm(a),
    })
}

pub fn nuclear_norm(a: &Matrix) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(svd(a)?.s.sum())
}

pub fn l1_norm(a: &Matrix) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

pub fn linf_norm(a: &Matrix) -> f64 {
    a.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
}
