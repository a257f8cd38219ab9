//! Matrix norms, the four performance criteria and empirical checks of the
//! autocovariance and inverse spectral density error bounds.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Result, VarError};
use crate::model::{companion, forecast, simulate, VarModel, DEFAULT_BURN_IN};
use crate::spectral::{
    complex_norm_inf, complex_norm_one, fourier_frequencies, inverse_spectral_kernel,
    spectral_density, stacked_autocov0, C64, LYAPUNOV_TOL,
};

pub const DEFAULT_N_FREQ: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormKind {
    /// Largest absolute column sum.
    One,
    /// Largest absolute row sum.
    Inf,
    /// Largest absolute entry.
    Max,
    /// Largest singular value.
    Two,
}

impl NormKind {
    pub fn name(&self) -> &'static str {
        match self {
            NormKind::One => "1",
            NormKind::Inf => "inf",
            NormKind::Max => "max",
            NormKind::Two => "2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "one" | "l1" => Ok(NormKind::One),
            "inf" | "infinity" | "linf" => Ok(NormKind::Inf),
            "max" => Ok(NormKind::Max),
            "2" | "two" | "spectral" => Ok(NormKind::Two),
            other => Err(VarError::Parse(format!("unknown norm '{other}'"))),
        }
    }
}

pub fn norm_one(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn norm_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn norm_max(m: &DMatrix<f64>) -> f64 {
    crate::linalg::max_abs(m)
}

/// Spectral norm by power iteration on `m^T m`, stopped when the Rayleigh
/// quotient changes by less than `1e-10` relative.
pub fn norm_two(m: &DMatrix<f64>) -> f64 {
    let k = m.ncols();
    if k == 0 || m.nrows() == 0 {
        return 0.0;
    }
    let mtm = m.tr_mul(m);
    // deterministic start with no exact orthogonality to simple vectors
    let mut v = DVector::from_fn(k, |i, _| 1.0 + (i as f64 + 1.0).sqrt() * 1e-3);
    v.normalize_mut();
    let mut value = 0.0_f64;
    for _ in 0..100_000 {
        let w = &mtm * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - value).abs() <= 1e-10 * next.abs().max(f64::MIN_POSITIVE) {
            value = next;
            break;
        }
        value = next;
    }
    value.max(0.0).sqrt()
}

pub fn matrix_norm(m: &DMatrix<f64>, kind: NormKind) -> f64 {
    match kind {
        NormKind::One => norm_one(m),
        NormKind::Inf => norm_inf(m),
        NormKind::Max => norm_max(m),
        NormKind::Two => norm_two(m),
    }
}

fn complex_norm(m: &DMatrix<C64>, kind: NormKind) -> f64 {
    match kind {
        NormKind::One => complex_norm_one(m),
        NormKind::Inf => complex_norm_inf(m),
        NormKind::Max => m.iter().fold(0.0, |acc, v| acc.max(v.norm())),
        NormKind::Two => {
            let svd = m.clone().svd(false, false);
            svd.singular_values.iter().fold(0.0, |acc, v| acc.max(*v))
        }
    }
}

fn check_pair(truth: &[DMatrix<f64>], estimate: &[DMatrix<f64>]) -> Result<()> {
    if truth.len() != estimate.len() || truth.iter().zip(estimate).any(|(a, b)| a.shape() != b.shape()) {
        return Err(VarError::Dimension(format!(
            "truth has {} lags of {:?}, estimate {} lags of {:?}",
            truth.len(),
            truth.first().map(|a| a.shape()),
            estimate.len(),
            estimate.first().map(|a| a.shape())
        )));
    }
    Ok(())
}

/// Criterion i): `||A - A_hat||_inf` on the companion matrices.
pub fn crit_param_error(truth: &[DMatrix<f64>], estimate: &[DMatrix<f64>]) -> Result<f64> {
    check_pair(truth, estimate)?;
    Ok(norm_inf(&(companion(truth).a_stack - companion(estimate).a_stack)))
}

/// Criterion ii): relative error of the stacked lag-zero autocovariance.
/// Returns `f64::INFINITY` when the estimate is not stable.
pub fn crit_gamma_error(
    truth: &VarModel,
    estimate: &[DMatrix<f64>],
    est_sigma: &DMatrix<f64>,
    kind: NormKind,
) -> Result<f64> {
    check_pair(truth.coeffs(), estimate)?;
    let g = stacked_autocov0(truth.coeffs(), truth.sigma(), LYAPUNOV_TOL)?;
    let g_hat = match stacked_autocov0(estimate, est_sigma, LYAPUNOV_TOL) {
        Ok(g) => g,
        Err(VarError::Unstable { .. }) | Err(VarError::NotConverged { .. }) => return Ok(f64::INFINITY),
        Err(e) => return Err(e),
    };
    Ok(matrix_norm(&(g_hat - &g), kind) / matrix_norm(&g, kind))
}

/// Criterion iii): `sum_k ||f(w_k) - f_hat(w_k)|| / sum_k ||f(w_k)||` over
/// `n_freq` Fourier frequencies. Returns `f64::INFINITY` when the estimate
/// is not stable.
pub fn crit_spectral_error(
    truth: &VarModel,
    estimate: &[DMatrix<f64>],
    est_sigma: &DMatrix<f64>,
    kind: NormKind,
    n_freq: usize,
) -> Result<f64> {
    check_pair(truth.coeffs(), estimate)?;
    if n_freq == 0 {
        return Err(VarError::InvalidArgument("n_freq must be positive".into()));
    }
    let radius = crate::linalg::spectral_radius(
        &companion(estimate).a_stack,
        crate::linalg::DEFAULT_RADIUS_TOL,
        crate::linalg::DEFAULT_RADIUS_MAX_ITER,
    )?;
    if radius >= 1.0 {
        return Ok(f64::INFINITY);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for w in fourier_frequencies(n_freq) {
        let f = spectral_density(truth.coeffs(), truth.sigma(), w)?;
        let f_hat = match spectral_density(estimate, est_sigma, w) {
            Ok(v) => v,
            Err(VarError::Singular(_)) => return Ok(f64::INFINITY),
            Err(e) => return Err(e),
        };
        num += complex_norm(&(f_hat - &f), kind);
        den += complex_norm(&f, kind);
    }
    Ok(num / den)
}

/// Squared `h`-step forecast errors scaled by the innovation variances and
/// averaged over components.
pub fn scaled_forecast_error(
    forecast: &DVector<f64>,
    realized: &DVector<f64>,
    sigma: &DMatrix<f64>,
) -> f64 {
    let d = forecast.len();
    (0..d)
        .map(|j| (forecast[j] - realized[j]).powi(2) / sigma[(j, j)])
        .sum::<f64>()
        / d as f64
}

/// Monte-Carlo estimate of criterion iv).
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastReport {
    /// Per component `MSE_j / sigma_j^2`.
    pub per_component: Vec<f64>,
    pub average: f64,
    pub failures: usize,
    pub replications: usize,
}

/// Simulates `n + h` observations per replication, fits on the first `n`,
/// forecasts `h` steps and scores the error against the realized value.
/// Failed fits are counted and excluded.
pub fn crit_forecast_mse<F>(
    truth: &VarModel,
    fit: F,
    n: usize,
    h: usize,
    replications: usize,
    seed: u64,
) -> Result<ForecastReport>
where
    F: Fn(&crate::model::TimeSeries) -> Result<Vec<DMatrix<f64>>> + Sync,
{
    if replications == 0 {
        return Err(VarError::InvalidArgument("replications must be >= 1".into()));
    }
    if h == 0 {
        return Err(VarError::InvalidArgument("forecast horizon must be >= 1".into()));
    }
    let d = truth.d();
    let rows: Vec<Option<Vec<f64>>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let s = crate::simlab::replication_seed(seed, r as u64);
            let full = simulate(truth, n + h, DEFAULT_BURN_IN, s).ok()?;
            let sample = full.head(n).ok()?;
            let coeffs = fit(&sample).ok()?;
            let fc = forecast(&coeffs, &sample, h).ok()?;
            let realized = full.at(n + h);
            let errs: Vec<f64> = (0..d)
                .map(|j| (fc[j] - realized[j]).powi(2) / truth.sigma()[(j, j)])
                .collect();
            errs.iter().all(|v| v.is_finite()).then_some(errs)
        })
        .collect();
    let ok: Vec<&Vec<f64>> = rows.iter().flatten().collect();
    let failures = replications - ok.len();
    if ok.is_empty() {
        return Err(VarError::Degenerate("every forecast replication failed".into()));
    }
    let per_component: Vec<f64> = (0..d)
        .map(|j| {
            let mut v: Vec<f64> = ok.iter().map(|r| r[j]).collect();
            v.sort_by(f64::total_cmp);
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    let average = per_component.iter().sum::<f64>() / d as f64;
    Ok(ForecastReport {
        per_component,
        average,
        failures,
        replications,
    })
}

/// Achieved error and bound of one error-bound check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl BoundCheck {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs + slack
    }
}

/// `sum_{j >= 0} ||M^j||^2`, truncated once a term drops below `1e-12`.
pub fn power_square_sum(m: &DMatrix<f64>, kind: NormKind) -> Result<f64> {
    const MAX_TERMS: usize = 1_000_000;
    let mut power = DMatrix::identity(m.nrows(), m.ncols());
    let mut total = 0.0;
    for j in 0..MAX_TERMS {
        let term = matrix_norm(&power, kind).powi(2);
        if !term.is_finite() {
            break;
        }
        total += term;
        if term < 1e-12 && j > 0 {
            return Ok(total);
        }
        power = &power * m;
    }
    Err(VarError::NotConverged {
        what: "power series of the companion matrix",
        iterations: MAX_TERMS,
        last: Some(vec![total]),
    })
}

/// Autocovariance error bound at lag `h >= 0` in a sub-multiplicative norm:
/// returns `||Gamma_hat_st(h) - Gamma_st(h)||` and the bound built from the
/// squared-norm power sums `C_A`, `C_A^T`, `C_Ahat`, `C_Ahat^T` and
/// `C_Sigma = ||Sigma||`.
pub fn autocov_bound_check(
    truth: &VarModel,
    estimate: &[DMatrix<f64>],
    est_sigma: &DMatrix<f64>,
    h: usize,
    kind: NormKind,
) -> Result<BoundCheck> {
    check_pair(truth.coeffs(), estimate)?;
    if kind == NormKind::Max {
        return Err(VarError::InvalidArgument(
            "the max norm is not sub-multiplicative".into(),
        ));
    }
    let a = companion(truth.coeffs()).a_stack;
    let a_hat = companion(estimate).a_stack;
    let g0 = stacked_autocov0(truth.coeffs(), truth.sigma(), LYAPUNOV_TOL)?;
    let g0_hat = stacked_autocov0(estimate, est_sigma, LYAPUNOV_TOL)?;
    let a_h = a.pow(h as u32);
    let a_hat_h = a_hat.pow(h as u32);
    let lhs = matrix_norm(&(&a_hat_h * &g0_hat - &a_h * &g0), kind);

    let n = |m: &DMatrix<f64>| matrix_norm(m, kind);
    let c_a = power_square_sum(&a, kind)?;
    let c_at = power_square_sum(&a.transpose(), kind)?;
    let c_ah = power_square_sum(&a_hat, kind)?;
    let c_aht = power_square_sum(&a_hat.transpose(), kind)?;
    let c_sigma = n(truth.sigma());
    let da = n(&(&a_hat - &a));
    let dat = n(&(a_hat.transpose() - a.transpose()));
    let ds = n(&(est_sigma - truth.sigma()));

    let lag_term = if h != 0 { da * (c_ah + c_a) * n(&g0) } else { 0.0 };
    let inner = da * c_sigma * (c_ah + c_a) * (c_at + c_at) / 4.0
        + ds * (c_ah + c_at) / 2.0
        + dat * (c_sigma + ds) * (c_ah + c_at) * (c_ah + c_aht) / 4.0;
    let rhs = lag_term + n(&a_hat_h) * inner;
    Ok(BoundCheck { lhs, rhs })
}

/// Inverse spectral density error bound, `2 pi` factor omitted on both
/// sides, checked on `n_freq` Fourier frequencies for norms 1 and inf.
///
/// `M` bounds `||I - sum_s A_s z^s||` by `1 + sum_s ||A_s||`; `t1`, `t2`
/// and `M_eps` take the larger of the 1- and inf-norm values.
pub fn inverse_spectral_bound_check(
    truth: &VarModel,
    estimate: &[DMatrix<f64>],
    est_sigma_inv: &DMatrix<f64>,
    n_freq: usize,
) -> Result<BoundCheck> {
    check_pair(truth.coeffs(), estimate)?;
    let sigma_inv = truth
        .sigma()
        .clone()
        .try_inverse()
        .ok_or_else(|| VarError::Singular("innovation covariance".into()))?;
    let both = |m: &DMatrix<f64>| norm_one(m).max(norm_inf(m));
    let sum_lag = |f: &dyn Fn(&DMatrix<f64>) -> f64, ms: &[DMatrix<f64>]| ms.iter().map(f).sum::<f64>();
    let m_bound = 1.0 + sum_lag(&norm_one, truth.coeffs()).max(sum_lag(&norm_inf, truth.coeffs()));
    let diffs: Vec<DMatrix<f64>> = truth
        .coeffs()
        .iter()
        .zip(estimate)
        .map(|(a, b)| b - a)
        .collect();
    let t1 = sum_lag(&norm_one, &diffs).max(sum_lag(&norm_inf, &diffs));
    let t2 = both(&(&sigma_inv - est_sigma_inv));
    let m_eps = both(&sigma_inv);
    let rhs = 2.0 * m_bound * m_eps * t1
        + m_bound * m_bound * t2
        + 2.0 * m_bound * t1 * t2
        + t1 * t1 * m_eps
        + t1 * t1 * t2;
    let mut lhs = 0.0_f64;
    for w in fourier_frequencies(n_freq) {
        let f = inverse_spectral_kernel(truth.coeffs(), &sigma_inv, w)?;
        let f_hat = inverse_spectral_kernel(estimate, est_sigma_inv, w)?;
        let diff = f - f_hat;
        lhs = lhs.max(complex_norm_one(&diff)).max(complex_norm_inf(&diff));
    }
    Ok(BoundCheck { lhs, rhs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_examples() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 3.0, 4.0]);
        assert_eq!(norm_one(&m), 6.0);
        assert_eq!(norm_inf(&m), 7.0);
        assert_eq!(norm_max(&m), 4.0);
        let i = DMatrix::<f64>::identity(3, 3);
        for k in [NormKind::One, NormKind::Inf, NormKind::Max, NormKind::Two] {
            assert!((matrix_norm(&i, k) - 1.0).abs() < 1e-12);
        }
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 4.0, 0.0]);
        assert!((norm_two(&m) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn param_error_examples() {
        let a = vec![DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3])];
        assert_eq!(crit_param_error(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b[0][(0, 0)] += 0.1;
        assert!((crit_param_error(&a, &b).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn gamma_error_examples() {
        let truth = VarModel::with_identity_noise(vec![DMatrix::from_element(1, 1, 0.5)]).unwrap();
        let i = DMatrix::identity(1, 1);
        assert_eq!(crit_gamma_error(&truth, truth.coeffs(), &i, NormKind::Inf).unwrap(), 0.0);
        let zero = vec![DMatrix::zeros(1, 1)];
        let e = crit_gamma_error(&truth, &zero, &i, NormKind::Inf).unwrap();
        assert!((e - 0.25).abs() < 1e-12);
        let unstable = vec![DMatrix::from_element(1, 1, 1.01)];
        assert_eq!(
            crit_gamma_error(&truth, &unstable, &i, NormKind::Inf).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn spectral_error_examples() {
        let truth = VarModel::with_identity_noise(vec![DMatrix::zeros(2, 2)]).unwrap();
        let i2 = DMatrix::identity(2, 2);
        assert_eq!(
            crit_spectral_error(&truth, truth.coeffs(), &i2, NormKind::Inf, 64).unwrap(),
            0.0
        );
        let e = crit_spectral_error(&truth, truth.coeffs(), &(i2 * 2.0), NormKind::Inf, 64).unwrap();
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_autocov_bound() {
        let truth = VarModel::with_identity_noise(vec![DMatrix::from_element(1, 1, 0.5)]).unwrap();
        let est = vec![DMatrix::from_element(1, 1, 0.6)];
        let check = autocov_bound_check(&truth, &est, &DMatrix::identity(1, 1), 0, NormKind::One).unwrap();
        assert!((check.lhs - (1.0 / 0.64 - 4.0 / 3.0)).abs() < 1e-12);
        let c_a = 4.0 / 3.0;
        let c_ah = 1.0 / 0.64;
        let expected = 0.1 * (c_ah + c_a) * (2.0 * c_a) / 4.0 + 0.1 * (c_ah + c_a) * (2.0 * c_ah) / 4.0;
        assert!((check.rhs - expected).abs() < 1e-9);
        assert!(check.holds(1e-9));
        let exact = autocov_bound_check(&truth, truth.coeffs(), &DMatrix::identity(1, 1), 2, NormKind::Inf).unwrap();
        assert_eq!(exact.lhs, 0.0);
    }

    #[test]
    fn exact_inverse_spectral_bound_is_zero() {
        let truth = VarModel::with_identity_noise(vec![DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.0, 0.2])]).unwrap();
        let check = inverse_spectral_bound_check(&truth, truth.coeffs(), &DMatrix::identity(2, 2), 32).unwrap();
        assert_eq!(check.rhs, 0.0);
        assert!(check.lhs < 1e-15);
    }
}
