//! Exact second-order quantities of a stable VAR(p): autocovariances and the
//! spectral density matrix together with its inverse.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};

use crate::error::{Result, VarError};
use crate::linalg;
use crate::model::{companion, VarModel};

pub type C64 = Complex<f64>;

/// Default residual tolerance of the Lyapunov solve.
pub const LYAPUNOV_TOL: f64 = 1e-10;

/// Stacked lag-zero autocovariance `Gamma_st(0)`, the `dp x dp` solution of
/// `G = A G A^T + E Sigma E^T` for coefficient matrices `coeffs` and
/// innovation covariance `sigma`.
pub fn stacked_autocov0(
    coeffs: &[DMatrix<f64>],
    sigma: &DMatrix<f64>,
    tol: f64,
) -> Result<DMatrix<f64>> {
    let comp = companion(coeffs);
    let radius = linalg::spectral_radius(
        &comp.a_stack,
        linalg::DEFAULT_RADIUS_TOL,
        linalg::DEFAULT_RADIUS_MAX_ITER,
    )?;
    if radius >= 1.0 {
        return Err(VarError::Unstable { radius });
    }
    let sigma_u = &comp.embed * sigma * comp.embed.transpose();
    linalg::discrete_lyapunov(&comp.a_stack, &sigma_u, tol)
}

/// Autocovariance `Gamma(h) = Cov(X_{t+h}, X_t)` for any integer lag.
pub fn autocov(model: &VarModel, h: i64, tol: f64) -> Result<DMatrix<f64>> {
    let g0 = stacked_autocov0(model.coeffs(), model.sigma(), tol)?;
    Ok(autocov_from_stacked(&model.companion().a_stack, &g0, model.d(), h))
}

/// `Gamma(h) = E^T A^h Gamma_st(0) E`, with `Gamma(-h) = Gamma(h)^T`.
pub fn autocov_from_stacked(
    a_stack: &DMatrix<f64>,
    g0: &DMatrix<f64>,
    d: usize,
    h: i64,
) -> DMatrix<f64> {
    let mut g = g0.clone();
    for _ in 0..h.unsigned_abs() {
        g = a_stack * g;
    }
    let block = g.view((0, 0), (d, d)).into_owned();
    if h < 0 {
        block.transpose()
    } else {
        block
    }
}

/// `I - sum_k A_k z^k`.
pub fn ar_polynomial(coeffs: &[DMatrix<f64>], z: C64) -> DMatrix<C64> {
    let d = coeffs[0].nrows();
    let mut out = DMatrix::<C64>::identity(d, d);
    let mut zk = C64::new(1.0, 0.0);
    for a in coeffs {
        zk *= z;
        for j in 0..d {
            for i in 0..d {
                out[(i, j)] -= zk * a[(i, j)];
            }
        }
    }
    out
}

fn unit(omega: f64) -> C64 {
    C64::new(omega.cos(), omega.sin())
}

/// `(M + M^H) / 2`.
pub fn hermitize(m: DMatrix<C64>) -> DMatrix<C64> {
    let h = m.adjoint();
    (m + h).map(|v| v * 0.5)
}

/// Spectral density `f(w) = (2 pi)^-1 A(e^{-iw})^-1 Sigma A(e^{-iw})^-H`,
/// evaluated with two LU solves.
pub fn spectral_density(
    coeffs: &[DMatrix<f64>],
    sigma: &DMatrix<f64>,
    omega: f64,
) -> Result<DMatrix<C64>> {
    let d = check_dims(coeffs, sigma)?;
    let poly = ar_polynomial(coeffs, unit(-omega));
    let lu = poly.lu();
    let sigma_c = sigma.map(|v| C64::new(v, 0.0));
    let singular = || {
        VarError::Singular(format!(
            "autoregressive polynomial at frequency {omega} (d = {d})"
        ))
    };
    let y = lu.solve(&sigma_c).ok_or_else(singular)?;
    let z = lu.solve(&y.adjoint()).ok_or_else(singular)?;
    if z.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(singular());
    }
    let f = z.adjoint().map(|v| v / (2.0 * PI));
    Ok(hermitize(f))
}

/// Inverse spectral density `2 pi A(e^{iw})^T Sigma^-1 A(e^{-iw})` from the
/// supplied coefficients and (estimated) precision matrix.
pub fn inverse_spectral_density(
    coeffs: &[DMatrix<f64>],
    sigma_inv: &DMatrix<f64>,
    omega: f64,
) -> Result<DMatrix<C64>> {
    check_dims(coeffs, sigma_inv)?;
    let poly = ar_polynomial(coeffs, unit(-omega));
    let prec = sigma_inv.map(|v| C64::new(v, 0.0));
    let g = poly.adjoint() * prec * &poly;
    Ok(hermitize(g.map(|v| v * (2.0 * PI))))
}

/// Same as [`inverse_spectral_density`] without the `2 pi` factor.
pub fn inverse_spectral_kernel(
    coeffs: &[DMatrix<f64>],
    sigma_inv: &DMatrix<f64>,
    omega: f64,
) -> Result<DMatrix<C64>> {
    inverse_spectral_density(coeffs, sigma_inv, omega).map(|m| m.map(|v| v / (2.0 * PI)))
}

fn check_dims(coeffs: &[DMatrix<f64>], m: &DMatrix<f64>) -> Result<usize> {
    let d = m.nrows();
    if coeffs.is_empty() || !m.is_square() || coeffs.iter().any(|a| a.shape() != (d, d)) {
        return Err(VarError::Dimension(format!(
            "{} coefficient matrices against a {:?} covariance",
            coeffs.len(),
            m.shape()
        )));
    }
    Ok(d)
}

/// Fourier frequencies `2 pi k / n` for `k = -floor(n/2) .. ceil(n/2) - 1`.
pub fn fourier_frequencies(n: usize) -> Vec<f64> {
    let lo = -((n / 2) as i64);
    let hi = n.div_ceil(2) as i64;
    (lo..hi).map(|k| 2.0 * PI * k as f64 / n as f64).collect()
}

/// Complex matrix norms used by the spectral criteria.
pub fn complex_norm_one(m: &DMatrix<C64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn complex_norm_inf(m: &DMatrix<C64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}
