//! Low-rank projection for out-of-sample principal features.
//!
//! Among all `P` with `P X = X Z`, the minimum nuclear-norm one is
//! `P = (X Z) X^+`: any other solution adds a term whose rows annihilate the
//! column space of `X`, and the pseudo-inverse solution is orthogonal to all
//! such terms.

use crate::error::{Error, Result};
use crate::linalg::{pseudo_inverse, Matrix};

/// Residual above which `fit_projection` reports an inconsistent constraint.
pub const CONSISTENCY_LIMIT: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct ProjectionMatrix {
    /// `m x m` projection.
    pub p: Matrix,
    /// `||P X - X Z||_F / max(||X Z||_F, 1)`.
    pub fit_residual: f64,
}

impl ProjectionMatrix {
    pub fn dim(&self) -> usize {
        self.p.nrows()
    }
}

/// `P = (X Z) X^+` with the default pseudo-inverse rank tolerance.
pub fn fit_projection(x: &Matrix, xz: &Matrix) -> Result<ProjectionMatrix> {
    fit_projection_with_tol(x, xz, None)
}

pub fn fit_projection_with_tol(x: &Matrix, xz: &Matrix, rank_tol: Option<f64>) -> Result<ProjectionMatrix> {
    let pm = solve_projection(x, xz, rank_tol)?;
    if pm.fit_residual > CONSISTENCY_LIMIT {
        return Err(Error::InconsistentProjection {
            residual: pm.fit_residual,
        });
    }
    Ok(pm)
}

/// Least-squares minimum-norm `P` without the consistency check. The
/// residual is still recorded.
pub fn solve_projection(x: &Matrix, xz: &Matrix, rank_tol: Option<f64>) -> Result<ProjectionMatrix> {
    if x.shape() != xz.shape() {
        return Err(Error::shape("fit_projection", x.shape(), xz.shape()));
    }
    let p = xz * pseudo_inverse(x, rank_tol)?;
    let fit_residual = (&p * x - xz).norm() / xz.norm().max(1.0);
    Ok(ProjectionMatrix { p, fit_residual })
}

/// `P * samples`.
pub fn project(pm: &ProjectionMatrix, samples: &Matrix) -> Result<Matrix> {
    if samples.nrows() != pm.dim() {
        return Err(Error::shape("project", (pm.dim(), samples.ncols()), samples.shape()));
    }
    Ok(&pm.p * samples)
}
