//! Cyclic coordinate descent for the row-wise and the vectorized Lasso.
//!
//! Both solvers work on the sample moments `G = X^T X / N`, `C = X^T Y / N`
//! and never touch the raw design after those are formed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, VarError};
use crate::model::SampleDesign;

/// Convergence threshold on the largest coordinate change of a sweep.
pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_SWEEPS: usize = 100_000;
/// Tolerance of the subgradient certificate checked before returning.
pub const KKT_TOL: f64 = 1e-6;

/// Second moments of a regression design.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    /// `X^T X / N`, `dp x dp`.
    pub gram: DMatrix<f64>,
    /// `X^T Y / N`, `dp x d`.
    pub cross: DMatrix<f64>,
    /// `Y^T Y / N`, `d x d`.
    pub yy: DMatrix<f64>,
    pub n_eff: usize,
}

impl Moments {
    pub fn from_design(design: &SampleDesign) -> Self {
        Self::from_matrices(&design.x, &design.y)
    }

    pub fn from_matrices(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Self {
        let n = x.nrows();
        let scale = 1.0 / n as f64;
        Self {
            gram: x.tr_mul(x) * scale,
            cross: x.tr_mul(y) * scale,
            yy: y.tr_mul(y) * scale,
            n_eff: n,
        }
    }

    pub fn dp(&self) -> usize {
        self.gram.nrows()
    }

    pub fn d(&self) -> usize {
        self.cross.ncols()
    }

    /// Residual sum of squares `||Y e_j - X beta||^2` from the moments.
    pub fn rss(&self, j: usize, beta: &DVector<f64>) -> f64 {
        let c = self.cross.column(j);
        let quad = (&self.gram * beta).dot(beta);
        let value = self.yy[(j, j)] - 2.0 * beta.dot(&c) + quad;
        value * self.n_eff as f64
    }

    /// Gradient-side vector `X^T (Y e_j - X beta) / N`.
    pub fn score(&self, j: usize, beta: &DVector<f64>) -> DVector<f64> {
        self.cross.column(j) - &self.gram * beta
    }
}

/// Solution of a single row problem with its sweep count.
#[derive(Debug, Clone)]
pub struct RowFit {
    pub beta: DVector<f64>,
    pub sweeps: usize,
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

fn check_weights(weights: &[f64], len: usize) -> Result<()> {
    if weights.len() != len {
        return Err(VarError::Dimension(format!(
            "{} penalty weights for {len} coefficients",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(VarError::InvalidArgument(
            "penalty weights must be finite and nonnegative".into(),
        ));
    }
    Ok(())
}

/// Largest violation of the Lasso subgradient conditions for row `j`.
pub fn kkt_violation(
    moments: &Moments,
    j: usize,
    lambda: f64,
    weights: &[f64],
    beta: &DVector<f64>,
) -> f64 {
    let r = moments.score(j, beta);
    let mut worst = 0.0_f64;
    for i in 0..beta.len() {
        let pen = lambda * weights[i];
        let v = if beta[i] == 0.0 {
            (r[i].abs() - pen).max(0.0)
        } else {
            (r[i] - pen * beta[i].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Minimizes `(2N)^-1 ||Y e_j - X beta||^2 + lambda sum_i w_i |beta_i|`.
///
/// Sweeps the active set until it settles, then does a full sweep; stops
/// when a full sweep moves no coordinate by more than `tol` and the
/// subgradient certificate holds at `KKT_TOL / 10`.
pub fn lasso_row(
    moments: &Moments,
    j: usize,
    lambda: f64,
    weights: &[f64],
    warm: Option<&DVector<f64>>,
    tol: f64,
    max_sweeps: usize,
) -> Result<RowFit> {
    let dp = moments.dp();
    if j >= moments.d() {
        return Err(VarError::Dimension(format!("row {j} of {}", moments.d())));
    }
    if !(lambda >= 0.0) {
        return Err(VarError::InvalidArgument(format!("lambda = {lambda}")));
    }
    check_weights(weights, dp)?;
    let g = &moments.gram;
    let mut beta = match warm {
        Some(b) if b.len() == dp => b.clone(),
        Some(b) => {
            return Err(VarError::Dimension(format!(
                "warm start of length {} for {dp} coefficients",
                b.len()
            )))
        }
        None => DVector::zeros(dp),
    };
    let mut r = moments.score(j, &beta);
    let mut sweeps = 0;

    let update = |i: usize, beta: &mut DVector<f64>, r: &mut DVector<f64>| -> f64 {
        let gii = g[(i, i)];
        let old = beta[i];
        let new = if gii > 0.0 {
            soft(r[i] + gii * old, lambda * weights[i]) / gii
        } else {
            0.0
        };
        let delta = new - old;
        if delta != 0.0 {
            beta[i] = new;
            for k in 0..dp {
                r[k] -= g[(k, i)] * delta;
            }
        }
        delta.abs()
    };

    loop {
        // full sweep
        let mut change = 0.0_f64;
        for i in 0..dp {
            change = change.max(update(i, &mut beta, &mut r));
        }
        sweeps += 1;
        if change < tol {
            // refresh the score to shed accumulated rounding
            r = moments.score(j, &beta);
            if kkt_violation(moments, j, lambda, weights, &beta) <= KKT_TOL * 0.1 {
                return Ok(RowFit { beta, sweeps });
            }
        }
        if sweeps >= max_sweeps {
            break;
        }
        // active-set sweeps
        let active: Vec<usize> = (0..dp).filter(|&i| beta[i] != 0.0).collect();
        let mut settled = false;
        for _ in 0..ACTIVE_SWEEPS {
            let mut change = 0.0_f64;
            for &i in &active {
                change = change.max(update(i, &mut beta, &mut r));
            }
            sweeps += 1;
            if change < tol * 0.1 || sweeps >= max_sweeps {
                settled = true;
                break;
            }
        }
        if !settled {
            let mut support = active.len();
            while let Some(next) = polish_row(moments, j, lambda, weights, &beta) {
                beta = next;
                let now = beta.iter().filter(|v| **v != 0.0).count();
                if now >= support {
                    break;
                }
                support = now;
            }
            r = moments.score(j, &beta);
        }
    }
    Err(VarError::NotConverged {
        what: "Lasso coordinate descent",
        iterations: sweeps,
        last: Some(beta.as_slice().to_vec()),
    })
}

/// Point on the segment from `from` to `to` where the first coordinate hits
/// zero, or `to` itself when no sign changes. `None` when the step is empty.
fn step_to_target(from: &[f64], to: &[f64]) -> Option<Vec<f64>> {
    if to.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut t = 1.0_f64;
    let mut hit = None;
    for (k, (&a, &b)) in from.iter().zip(to).enumerate() {
        if a * b <= 0.0 {
            let s = a / (a - b);
            if s < t {
                t = s;
                hit = Some(k);
            }
        }
    }
    if t <= 0.0 {
        return None;
    }
    let mut out: Vec<f64> = from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect();
    if let Some(k) = hit {
        out[k] = 0.0;
    }
    Some(out)
}

/// Objective of [`lasso_row`] up to the constant `yy / 2`.
fn row_objective(moments: &Moments, j: usize, lambda: f64, weights: &[f64], beta: &DVector<f64>) -> f64 {
    let c = moments.cross.column(j);
    let quad = (&moments.gram * beta).dot(beta);
    let pen: f64 = beta.iter().zip(weights).map(|(b, w)| w * b.abs()).sum();
    0.5 * quad - beta.dot(&c) + lambda * pen
}

/// Solves the stationarity equations on the support of `beta` with its
/// signs held fixed and moves towards that point, stopping at the first
/// coordinate that would change sign (which is set to zero). On the
/// segment the objective is a convex quadratic minimized at the target, so
/// the step never raises it; the final comparison only guards rounding.
/// Saves coordinate descent its slow crawl on ill-conditioned supports.
fn polish_row(moments: &Moments, j: usize, lambda: f64, weights: &[f64], beta: &DVector<f64>) -> Option<DVector<f64>> {
    let active: Vec<usize> = (0..beta.len()).filter(|&i| beta[i] != 0.0).collect();
    let k = active.len();
    if k == 0 || k > POLISH_MAX {
        return None;
    }
    let g = &moments.gram;
    let ga = DMatrix::from_fn(k, k, |a, b| g[(active[a], active[b])]);
    let rhs = DVector::from_fn(k, |a, _| {
        let i = active[a];
        moments.cross[(i, j)] - lambda * weights[i] * beta[i].signum()
    });
    let sol = ga.cholesky()?.solve(&rhs);
    let current: Vec<f64> = active.iter().map(|&i| beta[i]).collect();
    let step = step_to_target(&current, sol.as_slice())?;
    let mut next = DVector::zeros(beta.len());
    for (v, &i) in step.iter().zip(&active) {
        next[i] = *v;
    }
    let before = row_objective(moments, j, lambda, weights, beta);
    let after = row_objective(moments, j, lambda, weights, &next);
    (after <= before).then_some(next)
}

/// Largest supports handed to the direct solves.
const POLISH_MAX: usize = 2000;
const POLISH_MAX_VEC: usize = 250;
/// Active-set sweeps between direct solves on the support.
const ACTIVE_SWEEPS: usize = 10;

/// Largest `|X^T Y e_j / N|_i / w_i` over coordinates with positive weight:
/// the smallest `lambda` at which the row solution is zero.
pub fn lambda_max_row(moments: &Moments, j: usize, weights: &[f64]) -> f64 {
    let c = moments.cross.column(j);
    c.iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(v, w)| v.abs() / w)
        .fold(0.0, f64::max)
}

/// Coefficient matrix of a vectorized fit.
#[derive(Debug, Clone)]
pub struct VecFit {
    pub b: DMatrix<f64>,
    pub sweeps: usize,
}

/// Weighted gradient-side matrix `(C - G B) Omega`.
pub fn vec_score(moments: &Moments, omega: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    (&moments.cross - &moments.gram * b) * omega
}

/// Largest subgradient violation of the vectorized problem.
pub fn vec_kkt_violation(
    moments: &Moments,
    omega: &DMatrix<f64>,
    lambda: f64,
    weights: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> f64 {
    let s = vec_score(moments, omega, b);
    let mut worst = 0.0_f64;
    for j in 0..b.ncols() {
        for i in 0..b.nrows() {
            let pen = lambda * weights[(i, j)];
            let v = if b[(i, j)] == 0.0 {
                (s[(i, j)].abs() - pen).max(0.0)
            } else {
                (s[(i, j)] - pen * b[(i, j)].signum()).abs()
            };
            worst = worst.max(v);
        }
    }
    worst
}

/// Minimizes `(2N)^-1 tr((Y - X B) Omega (Y - X B)^T) + lambda sum w_ij |B_ij|`
/// over the whole `dp x d` block with one `lambda`.
///
/// With `Omega = I` the problem separates into the row problems solved by
/// [`lasso_row`].
pub fn lasso_vec(
    moments: &Moments,
    omega: &DMatrix<f64>,
    lambda: f64,
    weights: &DMatrix<f64>,
    warm: Option<&DMatrix<f64>>,
    tol: f64,
    max_sweeps: usize,
) -> Result<VecFit> {
    let dp = moments.dp();
    let d = moments.d();
    if omega.shape() != (d, d) || weights.shape() != (dp, d) {
        return Err(VarError::Dimension(format!(
            "weighting {:?} and penalty weights {:?} for a {dp} x {d} block",
            omega.shape(),
            weights.shape()
        )));
    }
    if omega.iter().any(|v| !v.is_finite()) {
        return Err(VarError::InvalidArgument("non-finite weighting matrix".into()));
    }
    if (0..d).any(|j| omega[(j, j)] <= 0.0) {
        return Err(VarError::NotPositiveDefinite("weighting matrix diagonal".into()));
    }
    check_weights(weights.as_slice(), dp * d)?;
    if !(lambda >= 0.0) {
        return Err(VarError::InvalidArgument(format!("lambda = {lambda}")));
    }
    let g = &moments.gram;
    let mut b = match warm {
        Some(w) if w.shape() == (dp, d) => w.clone(),
        Some(w) => {
            return Err(VarError::Dimension(format!(
                "warm start {:?} for a {dp} x {d} block",
                w.shape()
            )))
        }
        None => DMatrix::zeros(dp, d),
    };
    // R = C - G B
    let mut r = &moments.cross - g * &b;
    let mut sweeps = 0;

    let update = |i: usize, j: usize, b: &mut DMatrix<f64>, r: &mut DMatrix<f64>| -> f64 {
        let h = g[(i, i)] * omega[(j, j)];
        let old = b[(i, j)];
        let mut s = 0.0;
        for k in 0..d {
            s += r[(i, k)] * omega[(k, j)];
        }
        let new = if h > 0.0 {
            soft(s + h * old, lambda * weights[(i, j)]) / h
        } else {
            0.0
        };
        let delta = new - old;
        if delta != 0.0 {
            b[(i, j)] = new;
            for k in 0..dp {
                r[(k, j)] -= g[(k, i)] * delta;
            }
        }
        delta.abs()
    };

    loop {
        let mut change = 0.0_f64;
        for j in 0..d {
            for i in 0..dp {
                change = change.max(update(i, j, &mut b, &mut r));
            }
        }
        sweeps += 1;
        if change < tol {
            r = &moments.cross - g * &b;
            if vec_kkt_violation(moments, omega, lambda, weights, &b) <= KKT_TOL * 0.1 {
                return Ok(VecFit { b, sweeps });
            }
        }
        if sweeps >= max_sweeps {
            break;
        }
        let active: Vec<(usize, usize)> = (0..d)
            .flat_map(|j| (0..dp).map(move |i| (i, j)))
            .filter(|&(i, j)| b[(i, j)] != 0.0)
            .collect();
        let mut settled = false;
        for _ in 0..ACTIVE_SWEEPS * 5 {
            let mut change = 0.0_f64;
            for &(i, j) in &active {
                change = change.max(update(i, j, &mut b, &mut r));
            }
            sweeps += 1;
            if change < tol * 0.1 || sweeps >= max_sweeps {
                settled = true;
                break;
            }
        }
        if !settled {
            let mut support = active.len();
            while let Some(next) = polish_vec(moments, omega, lambda, weights, &b) {
                b = next;
                let now = b.iter().filter(|v| **v != 0.0).count();
                if now >= support {
                    break;
                }
                support = now;
            }
            r = &moments.cross - g * &b;
        }
    }
    Err(VarError::NotConverged {
        what: "vectorized Lasso coordinate descent",
        iterations: sweeps,
        last: Some(b.as_slice().to_vec()),
    })
}

fn vec_objective(moments: &Moments, omega: &DMatrix<f64>, lambda: f64, weights: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let gb = &moments.gram * b;
    let quad = (b.tr_mul(&gb) * omega).trace();
    let lin = (b.tr_mul(&moments.cross) * omega).trace();
    let pen: f64 = b.iter().zip(weights.iter()).map(|(v, w)| w * v.abs()).sum();
    0.5 * quad - lin + lambda * pen
}

/// Vectorized counterpart of [`polish_row`]; the Hessian on the support is
/// `G_ik Omega_jl`.
fn polish_vec(
    moments: &Moments,
    omega: &DMatrix<f64>,
    lambda: f64,
    weights: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    let (dp, d) = b.shape();
    let active: Vec<(usize, usize)> = (0..d)
        .flat_map(|j| (0..dp).map(move |i| (i, j)))
        .filter(|&(i, j)| b[(i, j)] != 0.0)
        .collect();
    let k = active.len();
    if k == 0 || k > POLISH_MAX_VEC {
        return None;
    }
    let g = &moments.gram;
    let h = DMatrix::from_fn(k, k, |x, y| {
        let (i, j) = active[x];
        let (l, m) = active[y];
        g[(i, l)] * omega[(j, m)]
    });
    let c_omega = &moments.cross * omega;
    let rhs = DVector::from_fn(k, |x, _| {
        let (i, j) = active[x];
        c_omega[(i, j)] - lambda * weights[(i, j)] * b[(i, j)].signum()
    });
    let sol = h.cholesky()?.solve(&rhs);
    let current: Vec<f64> = active.iter().map(|&(i, j)| b[(i, j)]).collect();
    let step = step_to_target(&current, sol.as_slice())?;
    let mut next = DMatrix::zeros(dp, d);
    for (v, &(i, j)) in step.iter().zip(&active) {
        next[(i, j)] = *v;
    }
    let before = vec_objective(moments, omega, lambda, weights, b);
    let after = vec_objective(moments, omega, lambda, weights, &next);
    (after <= before).then_some(next)
}

/// Smallest `lambda` at which the vectorized solution is zero.
pub fn lambda_max_vec(moments: &Moments, omega: &DMatrix<f64>, weights: &DMatrix<f64>) -> f64 {
    let s = &moments.cross * omega;
    s.iter()
        .zip(weights.iter())
        .filter(|(_, w)| **w > 0.0)
        .map(|(v, w)| v.abs() / w)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_xy(n: usize, k: usize, m: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, k, |_, _| rng.random::<f64>() - 0.5);
        let y = DMatrix::from_fn(n, m, |_, _| rng.random::<f64>() - 0.5);
        (x, y)
    }

    #[test]
    fn single_predictor_is_soft_threshold() {
        // x^T x / N = 1
        let x = DMatrix::from_column_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]);
        let y = DMatrix::from_column_slice(4, 1, &[2.0, -1.0, 0.5, 0.5]);
        let m = Moments::from_matrices(&x, &y);
        let c = m.cross[(0, 0)];
        for lambda in [0.0, 0.1, 0.5, 1.0, 2.0] {
            let fit = lasso_row(&m, 0, lambda, &[1.0], None, 1e-12, 1000).unwrap();
            assert!((fit.beta[0] - soft(c, lambda)).abs() < 1e-14);
        }
    }

    #[test]
    fn null_model_at_lambda_max() {
        let (x, y) = random_xy(40, 6, 2, 1);
        let m = Moments::from_matrices(&x, &y);
        let w = vec![1.0; 6];
        let lmax = lambda_max_row(&m, 1, &w);
        let fit = lasso_row(&m, 1, lmax, &w, None, 1e-7, 1000).unwrap();
        assert!(fit.beta.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_lambda_is_least_squares() {
        let (x, y) = random_xy(50, 2, 2, 2);
        let m = Moments::from_matrices(&x, &y);
        let direct = (x.tr_mul(&x)).lu().solve(&x.tr_mul(&y)).unwrap();
        for j in 0..2 {
            let fit = lasso_row(&m, j, 0.0, &[1.0, 1.0], None, 1e-12, 100_000).unwrap();
            for i in 0..2 {
                assert!((fit.beta[i] - direct[(i, j)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn certificate_holds() {
        let (x, y) = random_xy(30, 12, 3, 3);
        let m = Moments::from_matrices(&x, &y);
        let w: Vec<f64> = (0..12).map(|i| 0.5 + i as f64 * 0.1).collect();
        for lambda in [0.001, 0.01, 0.05] {
            let fit = lasso_row(&m, 2, lambda, &w, None, DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap();
            assert!(kkt_violation(&m, 2, lambda, &w, &fit.beta) <= KKT_TOL);
        }
    }

    #[test]
    fn identity_weighting_matches_rows() {
        let (x, y) = random_xy(30, 6, 3, 4);
        let m = Moments::from_matrices(&x, &y);
        let w = DMatrix::from_element(6, 3, 1.0);
        let lambda = 0.01;
        let fit = lasso_vec(&m, &DMatrix::identity(3, 3), lambda, &w, None, 1e-10, 100_000).unwrap();
        for j in 0..3 {
            let row = lasso_row(&m, j, lambda, &[1.0; 6], None, 1e-10, 100_000).unwrap();
            for i in 0..6 {
                assert!((row.beta[i] - fit.b[(i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn vec_null_model_at_lambda_max() {
        let (x, y) = random_xy(30, 4, 2, 5);
        let m = Moments::from_matrices(&x, &y);
        let omega = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let w = DMatrix::from_element(4, 2, 1.0);
        let lmax = lambda_max_vec(&m, &omega, &w);
        let fit = lasso_vec(&m, &omega, lmax, &w, None, 1e-7, 1000).unwrap();
        assert!(fit.b.iter().all(|v| *v == 0.0));
        let fit = lasso_vec(&m, &omega, lmax * 0.5, &w, None, 1e-7, 1000).unwrap();
        assert!(fit.b.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn moment_rss_matches_direct() {
        let (x, y) = random_xy(25, 3, 2, 6);
        let m = Moments::from_matrices(&x, &y);
        let beta = DVector::from_vec(vec![0.3, -0.2, 0.1]);
        let direct = (y.column(1) - &x * &beta).norm_squared();
        assert!((m.rss(1, &beta) - direct).abs() < 1e-12);
    }
}
