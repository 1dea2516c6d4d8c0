//! Latent low-rank representation.
//!
//! Solves
//!
//! ```text
//! min ||Z||_* + lambda1 ||L||_* + lambda2 ||E||_1   s.t.  X = X Z + L X + E
//! ```
//!
//! with an inexact augmented Lagrangian scheme. Two splitting variables
//! `J = Z` and `S = L` carry the nuclear norms so that every sub-problem is
//! either a proximal step or a linear least-squares step:
//!
//! ```text
//! J <- svt(Z + Y2/mu, 1/mu)
//! S <- svt(L + Y3/mu, lambda1/mu)
//! Z <- (I + X^T X)^{-1} (X^T (X - L X - E) + J + (X^T Y1 - Y2)/mu)
//! L <- ((X - X Z - E) X^T + S + (Y1 X^T - Y3)/mu) (I + X X^T)^{-1}
//! E <- soft(X - X Z - L X + Y1/mu, lambda2/mu)
//! Y1 += mu (X - X Z - L X - E),  Y2 += mu (Z - J),  Y3 += mu (L - S)
//! mu <- min(rho mu, mu_max)
//! ```
//!
//! `XZ` is the principal part of the data and `LX` the salient part.

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, ridge_gram_inverse, soft_threshold, svt, Matrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Bound on the relative constraint residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial augmented-Lagrangian penalty.
    pub mu0: f64,
    /// Penalty growth factor per iteration.
    pub rho: f64,
    pub mu_max: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-6,
            max_iter: 500,
            mu0: 1e-2,
            rho: 1.1,
            mu_max: 1e10,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", format!("must be > 0, got {}", self.tol)));
        }
        if self.max_iter < 1 {
            return Err(Error::param("max_iter", "must be >= 1"));
        }
        if !(self.mu0 > 0.0) {
            return Err(Error::param("mu0", format!("must be > 0, got {}", self.mu0)));
        }
        if !(self.rho > 1.0) {
            return Err(Error::param("rho", format!("must be > 1, got {}", self.rho)));
        }
        if !(self.mu0 < self.mu_max) {
            return Err(Error::param("mu_max", "must exceed mu0"));
        }
        Ok(())
    }
}

/// One solver iteration as recorded in the history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `max(||X - XZ - LX - E||_F / ||X||_F, ||Z - J||_F, ||L - S||_F)`.
    /// The codes are scale-free, so only the data constraint is normalized.
    pub constraint_residual: f64,
    /// Penalty used during this iteration.
    pub mu: f64,
}

#[derive(Clone, Debug)]
pub struct LatLrrModel {
    /// `n x n` column-space code.
    pub z: Matrix,
    /// `m x m` row-space code.
    pub l: Matrix,
    /// `m x n` sparse residual.
    pub e: Matrix,
    pub lambda1: f64,
    pub lambda2: f64,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
}

impl LatLrrModel {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }

    pub fn final_residual(&self) -> f64 {
        self.history.last().map_or(0.0, |h| h.constraint_residual)
    }

    /// `||Z||_* + lambda1 ||L||_* + lambda2 ||E||_1`.
    pub fn objective(&self) -> Result<f64> {
        use crate::linalg::{l1_norm, nuclear_norm};
        Ok(nuclear_norm(&self.z)?
            + self.lambda1 * nuclear_norm(&self.l)?
            + self.lambda2 * l1_norm(&self.e))
    }
}

fn check_penalty(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and > 0, got {v}")))
    }
}

fn check_data(op: &'static str, x: &Matrix) -> Result<()> {
    if x.is_empty() {
        return Err(Error::param("x", format!("{op}: data matrix is empty")));
    }
    ensure_finite(op, x)
}

fn data_scale(x: &Matrix) -> f64 {
    let n = x.norm();
    if n > 0.0 {
        n
    } else {
        1.0
    }
}

/// Fit the latent low-rank decomposition of `x` (columns are samples).
///
/// Hitting `max_iter` is not an error: the model comes back with
/// `converged == false` and its final residual in `history`.
pub fn latlrr_fit(x: &Matrix, lambda1: f64, lambda2: f64, opts: &SolverOptions) -> Result<LatLrrModel> {
    check_data("latlrr_fit", x)?;
    check_penalty("lambda1", lambda1)?;
    check_penalty("lambda2", lambda2)?;
    opts.validate()?;

    let (m, n) = x.shape();
    let xt = x.transpose();
    let scale = data_scale(x);

    // (I + X^T X)^{-1} and (I + X X^T)^{-1}; both fixed for the whole run.
    let inv_col = ridge_gram_inverse(&xt, 1.0)?;
    let inv_row = ridge_gram_inverse(x, 1.0)?;
    let xtx = &xt * x;
    let xxt = x * &xt;

    let mut z = Matrix::zeros(n, n);
    let mut l = Matrix::zeros(m, m);
    let mut e = Matrix::zeros(m, n);
    let mut y1 = Matrix::zeros(m, n);
    let mut y2 = Matrix::zeros(n, n);
    let mut y3 = Matrix::zeros(m, m);
    let mut mu = opts.mu0;

    let mut history = Vec::new();
    let mut converged = false;

    for iteration in 1..=opts.max_iter {
        let j = svt(&(&z + &y2 / mu), 1.0 / mu)?;
        let s = svt(&(&l + &y3 / mu), lambda1 / mu)?;

        // X^T (X - LX - E) = X^T X - X^T L X - X^T E
        let lx = &l * x;
        let rhs_z = &xtx - &xt * (&lx + &e) + &j + (&xt * &y1 - &y2) / mu;
        z = &inv_col * rhs_z;

        let xz = x * &z;
        let rhs_l = &xxt - (&xz + &e) * &xt + &s + (&y1 * &xt - &y3) / mu;
        l = rhs_l * &inv_row;

        let lx = &l * x;
        let xz_lx = &xz + &lx;
        e = soft_threshold(&(x - &xz_lx + &y1 / mu), lambda2 / mu)?;

        let r_x = x - &xz_lx - &e;
        let r_z = &z - &j;
        let r_l = &l - &s;

        let residual = (r_x.norm() / scale).max(r_z.norm()).max(r_l.norm());
        if !residual.is_finite() {
            return Err(Error::numerical("latlrr_fit", format!("residual diverged at iteration {iteration}")));
        }
        history.push(IterationRecord {
            iteration,
            constraint_residual: residual,
            mu,
        });
        if residual <= opts.tol {
            converged = true;
            break;
        }

        y1 += &r_x * mu;
        y2 += &r_z * mu;
        y3 += &r_l * mu;
        mu = (mu * opts.rho).min(opts.mu_max);
    }

    Ok(LatLrrModel {
        z,
        l,
        e,
        lambda1,
        lambda2,
        history,
        converged,
    })
}

/// Plain low-rank representation against dictionary `d`:
/// `min ||Z||_* + lambda ||E||_1  s.t.  X = D Z + E`.
#[derive(Clone, Debug)]
pub struct LrrModel {
    pub z: Matrix,
    pub e: Matrix,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
}

pub fn lrr_fit(x: &Matrix, d: &Matrix, lambda: f64, opts: &SolverOptions) -> Result<LrrModel> {
    check_data("lrr_fit", x)?;
    check_data("lrr_fit", d)?;
    check_penalty("lambda", lambda)?;
    opts.validate()?;
    if d.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch {
            op: "lrr_fit",
            expected: format!("dictionary with {} rows", x.nrows()),
            found: format!("{} rows", d.nrows()),
        });
    }

    let (m, n) = x.shape();
    let k = d.ncols();
    let dt = d.transpose();
    let scale = data_scale(x);
    let inv = ridge_gram_inverse(&dt, 1.0)?;
    let dtx = &dt * x;

    let mut z = Matrix::zeros(k, n);
    let mut e = Matrix::zeros(m, n);
    let mut y1 = Matrix::zeros(m, n);
    let mut y2 = Matrix::zeros(k, n);
    let mut mu = opts.mu0;
    let mut history = Vec::new();
    let mut converged = false;

    for iteration in 1..=opts.max_iter {
        let j = svt(&(&z + &y2 / mu), 1.0 / mu)?;
        z = &inv * (&dtx - &dt * &e + &j + (&dt * &y1 - &y2) / mu);
        let dz = d * &z;
        e = soft_threshold(&(x - &dz + &y1 / mu), lambda / mu)?;

        let r_x = x - &dz - &e;
        let r_z = &z - &j;
        let residual = (r_x.norm() / scale).max(r_z.norm());
        if !residual.is_finite() {
            return Err(Error::numerical("lrr_fit", format!("residual diverged at iteration {iteration}")));
        }
        history.push(IterationRecord {
            iteration,
            constraint_residual: residual,
            mu,
        });
        if residual <= opts.tol {
            converged = true;
            break;
        }
        y1 += &r_x * mu;
        y2 += &r_z * mu;
        mu = (mu * opts.rho).min(opts.mu_max);
    }

    Ok(LrrModel {
        z,
        e,
        history,
        converged,
    })
}

/// Principal features `X Z`.
pub fn principal_features(model: &LatLrrModel, x: &Matrix) -> Result<Matrix> {
    let n = model.z.nrows();
    if x.ncols() != n {
        return Err(Error::shape("principal_features", (x.nrows(), n), x.shape()));
    }
    Ok(x * &model.z)
}

/// Salient features `L X`.
pub fn salient_features(model: &LatLrrModel, x: &Matrix) -> Result<Matrix> {
    let m = model.l.nrows();
    if x.nrows() != m {
        return Err(Error::shape("salient_features", (m, x.ncols()), x.shape()));
    }
    Ok(&model.l * x)
}
