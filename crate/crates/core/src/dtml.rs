//! Double transformation matrix learning.
//!
//! Given principal features `A = XZ`, salient features `B = LX` (both
//! `m x n`) and one-hot labels `Y` (`c x n`), learn `W1, W2` (`c x m`) for
//!
//! ```text
//! min ||Y - W1 A - W2 B||_F^2 + lambda3 ||W1||_F^2 + lambda4 ||W2||_F^2
//! ```
//!
//! by exact block-coordinate steps
//!
//! ```text
//! W1 <- (Y A^T - W2 B A^T) T1,   T1 = (A A^T + lambda3 I)^{-1}
//! W2 <- (Y B^T - W1 A B^T) T2,   T2 = (B B^T + lambda4 I)^{-1}
//! ```
//!
//! starting from `W1 = W2 = 0`. `T1` and `T2` do not depend on the weights
//! and are formed once.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{ridge_gram_inverse, spd_inverse, Matrix};

/// Which transformation model is fitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AblationMode {
    /// Two matrices, `Y ~ W1 XZ + W2 LX`.
    Full,
    /// Salient features only, `Y ~ W2 LX`.
    SalientOnly,
    /// One shared matrix on the clean sum, `Y ~ W (XZ + LX)`.
    SharedSingle,
}

impl AblationMode {
    pub const ALL: [AblationMode; 3] = [
        AblationMode::SalientOnly,
        AblationMode::SharedSingle,
        AblationMode::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::SalientOnly => "salient-only",
            AblationMode::SharedSingle => "shared-single",
        }
    }

    /// Row label in ablation tables.
    pub fn formula(self) -> &'static str {
        match self {
            AblationMode::Full => "y-w1xz-w2lx",
            AblationMode::SalientOnly => "y-w2lx",
            AblationMode::SharedSingle => "y-w(xz+lx)",
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(AblationMode::Full),
            "salient-only" | "salient" => Ok(AblationMode::SalientOnly),
            "shared-single" | "shared" | "single" => Ok(AblationMode::SharedSingle),
            other => Err(Error::param(
                "mode",
                format!("unknown mode {other:?} (expected full, salient-only or shared-single)"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Stop once `(f(t-1) - f(t)) / max(f(t-1), 1e-12) < tol`. The decrease is
    /// evaluated from the step itself, so tolerances below `f64::EPSILON` work.
    pub tol: f64,
    /// Maximum number of sweeps (one sweep = W1 update then W2 update).
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-6,
            max_iter: 100,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", format!("must be > 0, got {}", self.tol)));
        }
        if self.max_iter < 1 {
            return Err(Error::param("max_iter", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DtmlModel {
    pub w1: Matrix,
    pub w2: Matrix,
    pub lambda3: f64,
    pub lambda4: f64,
    pub mode: AblationMode,
    /// Objective at the zero initialization, then after every sweep.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl DtmlModel {
    pub fn sweeps(&self) -> usize {
        self.objective_trace.len().saturating_sub(1)
    }

    pub fn final_objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }

    /// `W1 a + W2 b`.
    pub fn transform(&self, a: &Matrix, b: &Matrix) -> Result<Matrix> {
        let m = self.w1.ncols();
        if a.nrows() != m || b.shape() != a.shape() {
            return Err(Error::shape("DtmlModel::transform", (m, a.ncols()), b.shape()));
        }
        Ok(&self.w1 * a + &self.w2 * b)
    }
}

/// State handed to a sweep observer after each completed sweep.
#[derive(Debug)]
pub struct Sweep<'a> {
    pub index: usize,
    pub w1: &'a Matrix,
    pub w2: &'a Matrix,
    pub objective: f64,
}

fn check_lambda(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and > 0, got {v}")))
    }
}

fn check_shapes(op: &'static str, a: &Matrix, b: &Matrix, y: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    if y.ncols() != a.ncols() {
        return Err(Error::shape(op, (y.nrows(), a.ncols()), y.shape()));
    }
    if a.nrows() == 0 || a.ncols() == 0 || y.nrows() == 0 {
        return Err(Error::param("a", format!("{op}: empty input")));
    }
    Ok(())
}

/// `1/2 ||Y - W1 A - W2 B||_F^2 + lambda3/2 ||W1||_F^2 + lambda4/2 ||W2||_F^2`.
pub fn objective(
    w1: &Matrix,
    w2: &Matrix,
    a: &Matrix,
    b: &Matrix,
    y: &Matrix,
    lambda3: f64,
    lambda4: f64,
) -> Result<f64> {
    let (c, m) = (y.nrows(), a.nrows());
    if w1.shape() != (c, m) {
        return Err(Error::shape("objective", (c, m), w1.shape()));
    }
    if w2.shape() != (c, m) {
        return Err(Error::shape("objective", (c, m), w2.shape()));
    }
    if a.shape() != b.shape() || y.ncols() != a.ncols() {
        return Err(Error::shape("objective", a.shape(), b.shape()));
    }
    let r = y - w1 * a - w2 * b;
    Ok(0.5 * r.norm_squared() + 0.5 * lambda3 * w1.norm_squared() + 0.5 * lambda4 * w2.norm_squared())
}

/// Alternating fit of the full two-matrix model.
pub fn dtml_fit(a: &Matrix, b: &Matrix, y: &Matrix, lambda3: f64, lambda4: f64, opts: &FitOptions) -> Result<DtmlModel> {
    fit_alternating(a, b, y, lambda3, lambda4, opts, false, |_| {})
}

/// [`dtml_fit`] with a callback after every sweep.
pub fn dtml_fit_observed(
    a: &Matrix,
    b: &Matrix,
    y: &Matrix,
    lambda3: f64,
    lambda4: f64,
    opts: &FitOptions,
    observer: impl FnMut(&Sweep<'_>),
) -> Result<DtmlModel> {
    fit_alternating(a, b, y, lambda3, lambda4, opts, false, observer)
}

#[allow(clippy::too_many_arguments)]
fn fit_alternating(
    a: &Matrix,
    b: &Matrix,
    y: &Matrix,
    lambda3: f64,
    lambda4: f64,
    opts: &FitOptions,
    recompute_gram: bool,
    mut observer: impl FnMut(&Sweep<'_>),
) -> Result<DtmlModel> {
    check_shapes("dtml_fit", a, b, y)?;
    check_lambda("lambda3", lambda3)?;
    check_lambda("lambda4", lambda4)?;
    opts.validate()?;

    let (c, m) = (y.nrows(), a.nrows());
    let at = a.transpose();
    let bt = b.transpose();
    let y_at = y * &at;
    let y_bt = y * &bt;
    let b_at = b * &at;
    let a_bt = b_at.transpose();

    let mut t1 = ridge_gram_inverse(a, lambda3)?;
    let mut t2 = ridge_gram_inverse(b, lambda4)?;

    let mut w1 = Matrix::zeros(c, m);
    let mut w2 = Matrix::zeros(c, m);
    let mut prev = objective(&w1, &w2, a, b, y, lambda3, lambda4)?;
    let mut trace = vec![prev];
    let mut converged = false;

    for index in 1..=opts.max_iter {
        if recompute_gram {
            t1 = ridge_gram_inverse(a, lambda3)?;
            t2 = ridge_gram_inverse(b, lambda4)?;
        }
        let w1_next = (&y_at - &w2 * &b_at) * &t1;
        let w2_next = (&y_bt - &w1_next * &a_bt) * &t2;
        // Each block update is an exact minimization, so the objective drops
        // by 1/2 ||D F||^2 + lambda/2 ||D||^2 with D the step. This equals
        // f(t-1) - f(t) but does not cancel near the optimum.
        let d1 = &w1_next - &w1;
        let d2 = &w2_next - &w2;
        let decrease = 0.5 * ((&d1 * a).norm_squared() + lambda3 * d1.norm_squared())
            + 0.5 * ((&d2 * b).norm_squared() + lambda4 * d2.norm_squared());
        w1 = w1_next;
        w2 = w2_next;

        let f = objective(&w1, &w2, a, b, y, lambda3, lambda4)?;
        if !f.is_finite() {
            return Err(Error::numerical("dtml_fit", format!("objective diverged at sweep {index}")));
        }
        trace.push(f);
        observer(&Sweep {
            index,
            w1: &w1,
            w2: &w2,
            objective: f,
        });
        if decrease / prev.max(1e-12) < opts.tol {
            converged = true;
            break;
        }
        prev = f;
    }

    Ok(DtmlModel {
        w1,
        w2,
        lambda3,
        lambda4,
        mode: AblationMode::Full,
        objective_trace: trace,
        converged,
    })
}

/// Exact minimizer of the two-matrix objective from one linear system:
/// with `M = [A; B]`, `[W1 W2] = Y M^T (M M^T + blockdiag(lambda3 I, lambda4 I))^{-1}`.
pub fn joint_closed_form(a: &Matrix, b: &Matrix, y: &Matrix, lambda3: f64, lambda4: f64) -> Result<(Matrix, Matrix)> {
    check_shapes("joint_closed_form", a, b, y)?;
    check_lambda("lambda3", lambda3)?;
    check_lambda("lambda4", lambda4)?;

    let (m, n) = a.shape();
    let mut stacked = Matrix::zeros(2 * m, n);
    stacked.rows_mut(0, m).copy_from(a);
    stacked.rows_mut(m, m).copy_from(b);

    let mut gram = &stacked * stacked.transpose();
    for i in 0..m {
        gram[(i, i)] += lambda3;
        gram[(m + i, m + i)] += lambda4;
    }
    let w = y * stacked.transpose() * spd_inverse("joint_closed_form", gram)?;
    Ok((w.columns(0, m).into_owned(), w.columns(m, m).into_owned()))
}

/// Single-matrix closed-form baselines.
///
/// `SalientOnly` regresses `Y` on `B` alone and leaves `W1 = 0`.
/// `SharedSingle` regresses `Y` on `A + B` and stores the one matrix in both
/// slots, so `W1 A + W2 B = W (A + B)` and embedding code is shared.
/// The recorded trace holds the two-matrix objective (both penalties equal
/// to `lambda`) at zero and at the returned pair.
pub fn fit_ablation(mode: AblationMode, a: &Matrix, b: &Matrix, y: &Matrix, lambda: f64) -> Result<DtmlModel> {
    check_shapes("fit_ablation", a, b, y)?;
    check_lambda("lambda", lambda)?;
    let (c, m) = (y.nrows(), a.nrows());

    let (w1, w2) = match mode {
        AblationMode::SalientOnly => {
            let w2 = y * b.transpose() * ridge_gram_inverse(b, lambda)?;
            (Matrix::zeros(c, m), w2)
        }
        AblationMode::SharedSingle => {
            let sum = a + b;
            let w = y * sum.transpose() * ridge_gram_inverse(&sum, lambda)?;
            (w.clone(), w)
        }
        AblationMode::Full => {
            return Err(Error::param("mode", "fit_ablation takes salient-only or shared-single"));
        }
    };
    let zero = Matrix::zeros(c, m);
    let start = objective(&zero, &zero, a, b, y, lambda, lambda)?;
    let end = objective(&w1, &w2, a, b, y, lambda, lambda)?;
    Ok(DtmlModel {
        w1,
        w2,
        lambda3: lambda,
        lambda4: lambda,
        mode,
        objective_trace: vec![start, end],
        converged: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn random(rows: usize, cols: usize, rng: &mut Xoshiro256PlusPlus) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn one_hot(labels: &[usize], c: usize) -> Matrix {
        Matrix::from_fn(c, labels.len(), |i, j| if labels[j] == i { 1.0 } else { 0.0 })
    }

    fn problem(seed: u64) -> (Matrix, Matrix, Matrix) {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let a = random(6, 30, &mut rng);
        let b = random(6, 30, &mut rng);
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        (a, b, one_hot(&labels, 3))
    }

    #[test]
    fn forced_case_zero_principal() {
        let a = Matrix::zeros(2, 2);
        let b = Matrix::identity(2, 2);
        let y = Matrix::identity(2, 2);
        let model = dtml_fit(&a, &b, &y, 1.0, 1.0, &FitOptions::default()).unwrap();
        assert!(model.converged);
        assert_eq!(model.w1, Matrix::zeros(2, 2));
        assert!((&model.w2 - Matrix::identity(2, 2) * 0.5).norm() < 1e-15);

        let (w1, w2) = joint_closed_form(&a, &b, &y, 1.0, 1.0).unwrap();
        assert!(w1.norm() < 1e-15);
        assert!((w2 - Matrix::identity(2, 2) * 0.5).norm() < 1e-15);

        let (w1, w2) = joint_closed_form(&b, &a, &y, 1.0, 1.0).unwrap();
        assert!((w1 - Matrix::identity(2, 2) * 0.5).norm() < 1e-15);
        assert!(w2.norm() < 1e-15);
    }

    #[test]
    fn matches_joint_oracle() {
        let (a, b, y) = problem(7);
        let opts = FitOptions { tol: 1e-15, max_iter: 500 };
        let model = dtml_fit(&a, &b, &y, 0.5, 0.2, &opts).unwrap();
        let (w1, w2) = joint_closed_form(&a, &b, &y, 0.5, 0.2).unwrap();
        assert!((&model.w1 - &w1).norm() <= 1e-7, "{}", (&model.w1 - &w1).norm());
        assert!((&model.w2 - &w2).norm() <= 1e-7);
        let f_star = objective(&w1, &w2, &a, &b, &y, 0.5, 0.2).unwrap();
        assert!((model.final_objective() - f_star).abs() / f_star <= 1e-10);
    }

    #[test]
    fn joint_oracle_satisfies_stationarity() {
        let (a, b, y) = problem(8);
        let (l3, l4) = (0.3, 2.0);
        let (w1, w2) = joint_closed_form(&a, &b, &y, l3, l4).unwrap();
        let i = Matrix::identity(6, 6);
        let g1 = &w1 * (&a * a.transpose() + &i * l3) - (&y - &w2 * &b) * a.transpose();
        let g2 = &w2 * (&b * b.transpose() + &i * l4) - (&y - &w1 * &a) * b.transpose();
        assert!(g1.norm() <= 1e-9);
        assert!(g2.norm() <= 1e-9);
    }

    #[test]
    fn trace_is_monotone() {
        let (a, b, y) = problem(9);
        let model = dtml_fit(&a, &b, &y, 0.01, 0.01, &FitOptions { tol: 1e-14, max_iter: 200 }).unwrap();
        for w in model.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn precomputed_gram_is_bitwise_equal_to_recomputed() {
        let (a, b, y) = problem(10);
        let opts = FitOptions { tol: 1e-12, max_iter: 50 };
        let fast = fit_alternating(&a, &b, &y, 0.1, 0.3, &opts, false, |_| {}).unwrap();
        let slow = fit_alternating(&a, &b, &y, 0.1, 0.3, &opts, true, |_| {}).unwrap();
        assert_eq!(fast.w1, slow.w1);
        assert_eq!(fast.w2, slow.w2);
        assert_eq!(fast.objective_trace, slow.objective_trace);
    }

    #[test]
    fn joint_optimum_is_fixed_point_of_updates() {
        let (a, b, y) = problem(11);
        let (l3, l4) = (0.2, 0.4);
        let (o1, o2) = joint_closed_form(&a, &b, &y, l3, l4).unwrap();
        let t1 = ridge_gram_inverse(&a, l3).unwrap();
        let t2 = ridge_gram_inverse(&b, l4).unwrap();
        let w1 = (&y * a.transpose() - &o2 * &b * a.transpose()) * t1;
        let w2 = (&y * b.transpose() - &w1 * &a * b.transpose()) * t2;
        assert!((w1 - &o1).norm() <= 1e-12);
        assert!((w2 - &o2).norm() <= 1e-12);
    }

    #[test]
    fn label_permutation_permutes_rows() {
        let (a, b, y) = problem(12);
        let perm = [2usize, 0, 1];
        let y_perm = Matrix::from_fn(3, y.ncols(), |i, j| y[(perm[i], j)]);
        let opts = FitOptions { tol: 1e-14, max_iter: 300 };
        let m = dtml_fit(&a, &b, &y, 0.1, 0.1, &opts).unwrap();
        let p = dtml_fit(&a, &b, &y_perm, 0.1, 0.1, &opts).unwrap();
        for (i, &k) in perm.iter().enumerate() {
            assert!((p.w1.row(i) - m.w1.row(k)).norm() <= 1e-10);
            assert!((p.w2.row(i) - m.w2.row(k)).norm() <= 1e-10);
        }
    }

    #[test]
    fn ablation_examples() {
        let i2 = Matrix::identity(2, 2);
        let z = Matrix::zeros(2, 2);
        let m = fit_ablation(AblationMode::SalientOnly, &z, &i2, &i2, 1.0).unwrap();
        assert_eq!(m.w1, z);
        assert!((&m.w2 - &i2 * 0.5).norm() < 1e-15);

        let m = fit_ablation(AblationMode::SharedSingle, &i2, &i2, &i2, 2.0).unwrap();
        assert_eq!(m.w1, m.w2);
        assert!((&m.w1 - &i2 / 3.0).norm() < 1e-15);

        assert!(fit_ablation(AblationMode::Full, &i2, &i2, &i2, 1.0).is_err());
    }

    #[test]
    fn ablations_never_beat_full_optimum() {
        for seed in 0..5 {
            let (a, b, y) = problem(100 + seed);
            for lambda in [1e-3, 0.1, 1.0, 10.0] {
                let (w1, w2) = joint_closed_form(&a, &b, &y, lambda, lambda).unwrap();
                let best = objective(&w1, &w2, &a, &b, &y, lambda, lambda).unwrap();
                for mode in [AblationMode::SalientOnly, AblationMode::SharedSingle] {
                    let m = fit_ablation(mode, &a, &b, &y, lambda).unwrap();
                    assert!(m.final_objective() >= best - 1e-12 * best.max(1.0));
                }
            }
        }
    }

    #[test]
    fn objective_examples() {
        let (a, b, y) = problem(13);
        let z = Matrix::zeros(3, 6);
        let f = objective(&z, &z, &a, &b, &y, 1.0, 1.0).unwrap();
        assert!((f - 0.5 * y.norm_squared()).abs() < 1e-12);

        // Independent elementwise recomputation.
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(99);
        let w1 = random(3, 6, &mut rng);
        let w2 = random(3, 6, &mut rng);
        let (l3, l4) = (0.7, 1.3);
        let mut fit = 0.0;
        for i in 0..3 {
            for j in 0..30 {
                let mut pred = 0.0;
                for k in 0..6 {
                    pred += w1[(i, k)] * a[(k, j)] + w2[(i, k)] * b[(k, j)];
                }
                fit += (y[(i, j)] - pred).powi(2);
            }
        }
        let pen1: f64 = w1.iter().map(|v| v * v).sum();
        let pen2: f64 = w2.iter().map(|v| v * v).sum();
        let want = 0.5 * fit + 0.5 * l3 * pen1 + 0.5 * l4 * pen2;
        let got = objective(&w1, &w2, &a, &b, &y, l3, l4).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.max(1.0));

        // Perfect fit, vanishing penalties.
        let w = Matrix::identity(2, 2);
        let f = objective(&w, &Matrix::zeros(2, 2), &w, &Matrix::zeros(2, 2), &w, 1e-300, 1e-300).unwrap();
        assert!(f < 1e-200);
    }

    #[test]
    fn rejects_bad_input() {
        let (a, b, y) = problem(14);
        assert!(dtml_fit(&a, &b, &y, 0.0, 1.0, &FitOptions::default()).is_err());
        assert!(dtml_fit(&a, &b, &y, 1.0, -1.0, &FitOptions::default()).is_err());
        let short = Matrix::zeros(3, 29);
        assert!(matches!(
            dtml_fit(&a, &b, &short, 1.0, 1.0, &FitOptions::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!("bogus".parse::<AblationMode>().is_err());
        assert_eq!("salient-only".parse::<AblationMode>().unwrap(), AblationMode::SalientOnly);
    }
}
