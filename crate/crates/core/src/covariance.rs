//! Innovation covariance estimation from VAR residuals: sample covariance,
//! cross-validated thresholding and CLIME precision estimation.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, VarError};
use crate::estimators::dantzig::dantzig;
use crate::model::{build_design, stack_coefficients, TimeSeries};
use crate::thresholding::{threshold_offdiag, ThresholdRule};

/// Residuals `e_t = X_t - sum_s A_s X_{t-s}` for `t = p+1..n`, in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMatrix {
    pub values: DMatrix<f64>,
    pub centered: bool,
}

impl ResidualMatrix {
    pub fn new(values: DMatrix<f64>, center: bool) -> Self {
        let mut values = values;
        if center {
            center_columns(&mut values);
        }
        Self {
            values,
            centered: center,
        }
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }
}

fn center_columns(m: &mut DMatrix<f64>) {
    let n = m.nrows() as f64;
    for mut col in m.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
}

pub fn residuals(series: &TimeSeries, coeffs: &[DMatrix<f64>], center: bool) -> Result<ResidualMatrix> {
    let d = series.d();
    if coeffs.is_empty() || coeffs.iter().any(|a| a.shape() != (d, d)) {
        return Err(VarError::Dimension(format!(
            "coefficients do not match series dimension {d}"
        )));
    }
    let p = coeffs.len();
    let design = build_design(series, p)?;
    let fitted = &design.x * stack_coefficients(coeffs);
    let rev = &design.y - fitted;
    // design rows run backwards in time
    let rows = rev.nrows();
    let values = DMatrix::from_fn(rows, d, |t, j| rev[(rows - 1 - t, j)]);
    Ok(ResidualMatrix::new(values, center))
}

/// `(n - p)^-1 sum_t e_t e_t^T`.
pub fn sample_cov(res: &ResidualMatrix) -> Result<DMatrix<f64>> {
    cross_product_cov(&res.values)
}

fn cross_product_cov(values: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = values.nrows();
    if n < 2 {
        return Err(VarError::InsufficientData { needed: 1, got: n });
    }
    let s = values.tr_mul(values) / n as f64;
    Ok(crate::linalg::symmetrize(s))
}

/// Random-split cross-validation settings for the threshold level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvSpec {
    pub splits: usize,
    pub grid_size: usize,
    /// Smallest grid value as a fraction of the largest off-diagonal entry.
    pub min_ratio: f64,
    pub seed: u64,
}

impl Default for CvSpec {
    fn default() -> Self {
        Self {
            splits: 10,
            grid_size: 30,
            min_ratio: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdedCov {
    pub matrix: DMatrix<f64>,
    pub lambda: f64,
}

/// Thresholds the off-diagonal part of the sample covariance at a level
/// chosen by random-split cross-validation with Frobenius loss.
pub fn thresholded_cov(res: &ResidualMatrix, rule: ThresholdRule, cv: &CvSpec) -> Result<ThresholdedCov> {
    let full = sample_cov(res)?;
    let d = full.nrows();
    let top = (0..d)
        .flat_map(|j| (0..d).filter(move |&i| i != j).map(move |i| (i, j)))
        .map(|(i, j)| full[(i, j)].abs())
        .fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(ThresholdedCov {
            matrix: full,
            lambda: 0.0,
        });
    }
    let grid = crate::tuning::lambda_grid(top, cv.grid_size.max(2), cv.min_ratio)?;

    let n = res.rows();
    let train = ((n as f64) * (1.0 - 1.0 / (n as f64).ln())).floor() as usize;
    if n < 4 || train < 2 || n - train < 2 || cv.splits == 0 {
        return Err(VarError::Degenerate(format!(
            "cannot split {n} residual rows for cross-validation"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cv.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss = vec![0.0; grid.len()];
    for _ in 0..cv.splits {
        order.shuffle(&mut rng);
        let pick = |idx: &[usize]| {
            DMatrix::from_fn(idx.len(), d, |r, c| res.values[(idx[r], c)])
        };
        let s_train = cross_product_cov(&pick(&order[..train]))?;
        let s_valid = cross_product_cov(&pick(&order[train..]))?;
        for (k, &lambda) in grid.iter().enumerate() {
            let diff = threshold_offdiag(rule, lambda, &s_train) - &s_valid;
            loss[k] += diff.norm_squared();
        }
    }
    let mut best = 0;
    for k in 1..grid.len() {
        if loss[k] < loss[best] {
            best = k;
        }
    }
    let lambda = grid[best];
    Ok(ThresholdedCov {
        matrix: threshold_offdiag(rule, lambda, &full),
        lambda,
    })
}

/// Column-wise CLIME estimate of the precision matrix of `cov`,
/// symmetrized by keeping the entry of smaller magnitude.
pub fn clime_precision(cov: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let raw = clime_columns(cov, lambda)?;
    Ok(symmetrize_min(&raw))
}

/// Unsymmetrized CLIME columns: column `j` solves
/// `min ||b||_1  s.t.  ||cov b - e_j||_max <= lambda`.
pub fn clime_columns(cov: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let d = cov.nrows();
    if !cov.is_square() {
        return Err(VarError::Dimension(format!("covariance {:?}", cov.shape())));
    }
    let ones = vec![1.0; d];
    let mut out = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut e = DVector::zeros(d);
        e[j] = 1.0;
        let col = dantzig(cov, &e, lambda, &ones).map_err(|err| match err {
            VarError::Infeasible => VarError::Singular(format!(
                "CLIME column {} is infeasible at lambda = {lambda}",
                j + 1
            )),
            other => other,
        })?;
        out.set_column(j, &col);
    }
    Ok(out)
}

pub fn clime_precision_from_residuals(res: &ResidualMatrix, lambda: f64) -> Result<DMatrix<f64>> {
    clime_precision(&sample_cov(res)?, lambda)
}

fn symmetrize_min(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    DMatrix::from_fn(d, d, |i, j| {
        let (a, b) = (m[(i, j)], m[(j, i)]);
        if a.abs() <= b.abs() {
            a
        } else {
            b
        }
    })
}

/// Weighting matrix for the vectorized Lasso: the inverse of the
/// thresholded residual covariance, or the inverse of its diagonal when the
/// thresholded matrix is not positive definite. The flag reports the
/// fallback.
pub fn weighting_matrix(res: &ResidualMatrix, rule: ThresholdRule, cv: &CvSpec) -> Result<(DMatrix<f64>, bool)> {
    let thresholded = thresholded_cov(res, rule, cv)?;
    let m = thresholded.matrix;
    if let Some(chol) = nalgebra::Cholesky::new(m.clone()) {
        let inv = crate::linalg::symmetrize(chol.inverse());
        if inv.iter().all(|v| v.is_finite()) {
            return Ok((inv, false));
        }
    }
    let d = m.nrows();
    let mut diag = DMatrix::zeros(d, d);
    for i in 0..d {
        if !(m[(i, i)] > 0.0) {
            return Err(VarError::NotPositiveDefinite(format!(
                "residual variance {} is {}",
                i + 1,
                m[(i, i)]
            )));
        }
        diag[(i, i)] = 1.0 / m[(i, i)];
    }
    Ok((diag, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_with_innovations, VarModel};

    #[test]
    fn sample_cov_arithmetic() {
        let res = ResidualMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]), false);
        assert_eq!(
            sample_cov(&res).unwrap(),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])
        );
        let res = ResidualMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]), false);
        let s = sample_cov(&res).unwrap();
        assert_eq!(s[(0, 1)], 0.0);
        let one = ResidualMatrix::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), false);
        assert!(sample_cov(&one).is_err());
    }

    #[test]
    fn residuals_reconstruct_innovations() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]);
        let model = VarModel::with_identity_noise(vec![a.clone()]).unwrap();
        let sim = simulate_with_innovations(&model, 40, 10, 5).unwrap();
        let res = residuals(&sim.series, &[a], false).unwrap();
        for t in 0..39 {
            for j in 0..2 {
                assert!((res.values[(t, j)] - sim.innovations[(t + 1, j)]).abs() < 1e-12);
            }
        }
        let zero = residuals(&sim.series, &[DMatrix::zeros(2, 2)], false).unwrap();
        assert_eq!(zero.values, sim.series.values().rows(1, 39).into_owned());
        let centered = residuals(&sim.series, &[DMatrix::zeros(2, 2)], true).unwrap();
        for c in centered.values.column_iter() {
            assert!(c.mean().abs() < 1e-12);
        }
    }

    #[test]
    fn clime_examples() {
        let p = clime_precision(&DMatrix::identity(3, 3), 0.1).unwrap();
        assert!((p - DMatrix::identity(3, 3) * 0.9).amax() < 1e-14);
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let p = clime_precision(&s, 0.0).unwrap();
        assert!((p - DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.25]))).amax() < 1e-14);
    }

    #[test]
    fn diagonal_covariance_survives_thresholding() {
        let mut v = DMatrix::zeros(20, 2);
        for t in 0..20 {
            v[(t, t % 2)] = if t % 4 < 2 { 1.0 } else { -1.0 };
        }
        let res = ResidualMatrix::new(v, false);
        let t = thresholded_cov(&res, ThresholdRule::Soft, &CvSpec::default()).unwrap();
        assert_eq!(t.matrix, sample_cov(&res).unwrap());
    }

    #[test]
    fn zero_threshold_is_sample_cov() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        assert_eq!(threshold_offdiag(ThresholdRule::Soft, 0.0, &m), m);
        let t = threshold_offdiag(ThresholdRule::Soft, 0.31, &m);
        assert_eq!(t, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]));
    }
}
