//! VAR(p) models, their companion (stacked VAR(1)) form, observed series and
//! the regression design built from a series.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, VarError};
use crate::linalg::{self, max_abs};

pub const DEFAULT_BURN_IN: usize = 500;
const SYMMETRY_TOL: f64 = 1e-12;

/// A VAR(p) model `X_t = A_1 X_{t-1} + ... + A_p X_{t-p} + e_t`, `Var(e_t) = Sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarModel {
    coeffs: Vec<DMatrix<f64>>,
    sigma: DMatrix<f64>,
}

impl VarModel {
    pub fn new(coeffs: Vec<DMatrix<f64>>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = sigma.nrows();
        if coeffs.is_empty() {
            return Err(VarError::InvalidArgument("a VAR model needs p >= 1".into()));
        }
        if d == 0 || !sigma.is_square() {
            return Err(VarError::Dimension(format!(
                "innovation covariance must be square and non-empty, got {:?}",
                sigma.shape()
            )));
        }
        for (k, a) in coeffs.iter().enumerate() {
            if a.shape() != (d, d) {
                return Err(VarError::Dimension(format!(
                    "A{} is {:?}, expected ({d}, {d})",
                    k + 1,
                    a.shape()
                )));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(VarError::InvalidArgument(format!(
                    "A{} has non-finite entries",
                    k + 1
                )));
            }
        }
        check_covariance(&sigma)?;
        Ok(Self { coeffs, sigma })
    }

    /// VAR(p) with the given coefficients and identity innovation covariance.
    pub fn with_identity_noise(coeffs: Vec<DMatrix<f64>>) -> Result<Self> {
        let d = coeffs.first().map(|a| a.nrows()).unwrap_or(0);
        Self::new(coeffs, DMatrix::identity(d, d))
    }

    pub fn p(&self) -> usize {
        self.coeffs.len()
    }

    pub fn d(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn coeffs(&self) -> &[DMatrix<f64>] {
        &self.coeffs
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn companion(&self) -> CompanionForm {
        companion(&self.coeffs)
    }

    /// Spectral radius of the companion matrix.
    pub fn spectral_radius(&self) -> Result<f64> {
        linalg::spectral_radius(
            &self.companion().a_stack,
            linalg::DEFAULT_RADIUS_TOL,
            linalg::DEFAULT_RADIUS_MAX_ITER,
        )
    }

    pub fn is_stable(&self) -> Result<bool> {
        Ok(self.spectral_radius()? < 1.0)
    }

    /// Coefficient block `B = (A_1^T, ..., A_p^T)^T`, a `dp x d` matrix.
    pub fn coefficient_block(&self) -> DMatrix<f64> {
        stack_coefficients(&self.coeffs)
    }
}

fn check_covariance(sigma: &DMatrix<f64>) -> Result<()> {
    let d = sigma.nrows();
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(VarError::InvalidArgument(
            "innovation covariance has non-finite entries".into(),
        ));
    }
    for i in 0..d {
        if sigma[(i, i)] <= 0.0 {
            return Err(VarError::NotPositiveDefinite(format!(
                "innovation variance {} is {}",
                i + 1,
                sigma[(i, i)]
            )));
        }
        for j in 0..i {
            let scale = sigma[(i, j)].abs().max(sigma[(j, i)].abs()).max(1.0);
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(VarError::InvalidArgument(format!(
                    "innovation covariance is not symmetric at ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(())
}

/// `dp x d` block `(A_1^T; ...; A_p^T)`.
pub fn stack_coefficients(coeffs: &[DMatrix<f64>]) -> DMatrix<f64> {
    let d = coeffs[0].nrows();
    let p = coeffs.len();
    let mut b = DMatrix::zeros(d * p, d);
    for (k, a) in coeffs.iter().enumerate() {
        b.view_mut((k * d, 0), (d, d)).copy_from(&a.transpose());
    }
    b
}

/// Inverse of [`stack_coefficients`].
pub fn unstack_coefficients(b: &DMatrix<f64>, p: usize) -> Result<Vec<DMatrix<f64>>> {
    let d = b.ncols();
    if p == 0 || b.nrows() != d * p {
        return Err(VarError::Dimension(format!(
            "coefficient block {:?} does not split into {p} lags",
            b.shape()
        )));
    }
    Ok((0..p)
        .map(|k| b.view((k * d, 0), (d, d)).transpose())
        .collect())
}

/// Stacked VAR(1) representation `W_t = A W_{t-1} + E e_t`, `X_t = E^T W_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionForm {
    pub a_stack: DMatrix<f64>,
    pub embed: DMatrix<f64>,
    pub d: usize,
    pub p: usize,
}

impl CompanionForm {
    pub fn dp(&self) -> usize {
        self.d * self.p
    }
}

pub fn companion(coeffs: &[DMatrix<f64>]) -> CompanionForm {
    let d = coeffs[0].nrows();
    let p = coeffs.len();
    let dp = d * p;
    let mut a_stack = DMatrix::zeros(dp, dp);
    for (k, a) in coeffs.iter().enumerate() {
        a_stack.view_mut((0, k * d), (d, d)).copy_from(a);
    }
    for i in d..dp {
        a_stack[(i, i - d)] = 1.0;
    }
    let mut embed = DMatrix::zeros(dp, d);
    for i in 0..d {
        embed[(i, i)] = 1.0;
    }
    CompanionForm { a_stack, embed, d, p }
}

/// An observed multivariate series; row `t` holds `X_{t+1}^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: DMatrix<f64>,
}

impl TimeSeries {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(VarError::InsufficientData {
                needed: 0,
                got: values.nrows(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % values.nrows(), pos / values.nrows());
            return Err(VarError::InvalidArgument(format!(
                "non-finite observation at t={}, component {}",
                r + 1,
                c + 1
            )));
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Observation `X_t` for a 1-based time index.
    pub fn at(&self, t: usize) -> DVector<f64> {
        self.values.row(t - 1).transpose()
    }

    /// First `len` observations.
    pub fn head(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.n() {
            return Err(VarError::InvalidArgument(format!(
                "cannot take {len} of {} observations",
                self.n()
            )));
        }
        Self::new(self.values.rows(0, len).into_owned())
    }

    /// Multiplies component `j` (0-based) by `factor`.
    pub fn scale_component(&self, j: usize, factor: f64) -> Self {
        let mut values = self.values.clone();
        values.column_mut(j).scale_mut(factor);
        Self { values }
    }
}

/// Simulated series together with the innovations that produced it.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub series: TimeSeries,
    /// `n x d`, row `t` is the innovation added at the matching series row.
    pub innovations: DMatrix<f64>,
}

/// Draws `burn_in + n` steps of the model from a zero initial state with
/// Gaussian innovations and keeps the last `n`.
pub fn simulate(model: &VarModel, n: usize, burn_in: usize, seed: u64) -> Result<TimeSeries> {
    simulate_with_innovations(model, n, burn_in, seed).map(|s| s.series)
}

pub fn simulate_with_innovations(
    model: &VarModel,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Simulation> {
    if n == 0 {
        return Err(VarError::InvalidArgument("cannot simulate 0 observations".into()));
    }
    let radius = model.spectral_radius()?;
    if radius >= 1.0 {
        return Err(VarError::Unstable { radius });
    }
    let innovations = draw_innovations(model.sigma(), burn_in + n, seed)?;
    let series = filter(model.coeffs(), &innovations);
    let keep = |m: &DMatrix<f64>| m.rows(burn_in, n).into_owned();
    Ok(Simulation {
        series: TimeSeries::new(keep(&series))?,
        innovations: keep(&innovations),
    })
}

/// `steps x d` Gaussian innovations `L z_t` with `L L^T = Sigma`.
pub fn draw_innovations(sigma: &DMatrix<f64>, steps: usize, seed: u64) -> Result<DMatrix<f64>> {
    let d = sigma.nrows();
    let chol = nalgebra::Cholesky::new(sigma.clone()).ok_or_else(|| {
        VarError::NotPositiveDefinite("Cholesky factorization of the innovation covariance".into())
    })?;
    let l = chol.l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(steps, d);
    let mut z = DVector::<f64>::zeros(d);
    for t in 0..steps {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        for i in 0..d {
            let mut acc = 0.0;
            for k in 0..=i {
                acc += l[(i, k)] * z[k];
            }
            out[(t, i)] = acc;
        }
    }
    Ok(out)
}

/// Runs the VAR recursion over a given innovation sequence from a zero
/// initial state. Lagged terms are accumulated lag-major, column-minor.
pub fn filter(coeffs: &[DMatrix<f64>], innovations: &DMatrix<f64>) -> DMatrix<f64> {
    let (steps, d) = innovations.shape();
    let mut x = DMatrix::zeros(steps, d);
    for t in 0..steps {
        for i in 0..d {
            let mut acc = 0.0;
            for (k, a) in coeffs.iter().enumerate().take(t) {
                for j in 0..d {
                    acc += a[(i, j)] * x[(t - k - 1, j)];
                }
            }
            x[(t, i)] = acc + innovations[(t, i)];
        }
    }
    x
}

/// Runs the stacked VAR(1) recursion `W_t = A W_{t-1} + E e_t` from a zero
/// initial state and returns `E^T W_t` for every step.
pub fn filter_companion(coeffs: &[DMatrix<f64>], innovations: &DMatrix<f64>) -> DMatrix<f64> {
    let comp = companion(coeffs);
    let (steps, d) = innovations.shape();
    let dp = comp.dp();
    let mut w = vec![0.0; dp];
    let mut next = vec![0.0; dp];
    let mut x = DMatrix::zeros(steps, d);
    for t in 0..steps {
        for i in 0..dp {
            let mut acc = 0.0;
            if i < d {
                for c in 0..dp {
                    acc += comp.a_stack[(i, c)] * w[c];
                }
                acc += innovations[(t, i)];
            } else {
                acc = w[i - d];
            }
            next[i] = acc;
        }
        std::mem::swap(&mut w, &mut next);
        for i in 0..d {
            x[(t, i)] = w[i];
        }
    }
    x
}

/// Regression form `Y = X B + E` of an observed series.
///
/// Row `r` of `y` is `X_{n-r}^T` and row `r` of `x` is
/// `(X_{n-r-1}^T, ..., X_{n-r-p}^T)`, for `r = 0..n-p`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDesign {
    pub y: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub p: usize,
    pub d: usize,
}

impl SampleDesign {
    /// Effective sample size `N = n - p`.
    pub fn n_eff(&self) -> usize {
        self.y.nrows()
    }

    pub fn dp(&self) -> usize {
        self.d * self.p
    }
}

pub fn build_design(series: &TimeSeries, p: usize) -> Result<SampleDesign> {
    let n = series.n();
    let d = series.d();
    if p == 0 {
        return Err(VarError::InvalidArgument("lag order must be >= 1".into()));
    }
    if n <= p {
        return Err(VarError::InsufficientData { needed: p, got: n });
    }
    let rows = n - p;
    let v = series.values();
    let mut y = DMatrix::zeros(rows, d);
    let mut x = DMatrix::zeros(rows, d * p);
    for r in 0..rows {
        // 0-based row index of X_t in `v`
        let t = n - 1 - r;
        for j in 0..d {
            y[(r, j)] = v[(t, j)];
        }
        for k in 0..p {
            for j in 0..d {
                x[(r, k * d + j)] = v[(t - k - 1, j)];
            }
        }
    }
    Ok(SampleDesign { y, x, p, d })
}

/// Iterated `h`-step forecast from the end of the series.
pub fn forecast(coeffs: &[DMatrix<f64>], series: &TimeSeries, h: usize) -> Result<DVector<f64>> {
    if h < 1 {
        return Err(VarError::InvalidArgument("forecast horizon must be >= 1".into()));
    }
    let p = coeffs.len();
    let d = series.d();
    if p == 0 || coeffs.iter().any(|a| a.shape() != (d, d)) {
        return Err(VarError::Dimension(format!(
            "coefficients do not match series dimension {d}"
        )));
    }
    if series.n() < p {
        return Err(VarError::InsufficientData {
            needed: p - 1,
            got: series.n(),
        });
    }
    // history[0] is the most recent value
    let mut history: Vec<DVector<f64>> = (0..p).map(|k| series.at(series.n() - k)).collect();
    let mut next = DVector::zeros(d);
    for _ in 0..h {
        next = coeffs
            .iter()
            .zip(history.iter())
            .fold(DVector::zeros(d), |acc, (a, x)| acc + a * x);
        history.rotate_right(1);
        history[0] = next.clone();
    }
    Ok(next)
}

/// Which of the two approximate sparsity classes to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassVariant {
    /// Column budgets per lag, `max_k ||A_k||_1 <= M`.
    PerLag,
    /// Column budgets summed over lags, `sum_k ||A_k||_1 <= M`.
    Summed,
}

/// Approximate sparsity class with exponent `q`, row/column budget `s` and
/// norm bound `m_bound`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityClass {
    pub variant: ClassVariant,
    pub q: f64,
    pub s: f64,
    pub m_bound: f64,
    pub p: usize,
}

impl SparsityClass {
    pub fn new(variant: ClassVariant, q: f64, s: f64, m_bound: f64, p: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&q) {
            return Err(VarError::InvalidArgument(format!("q = {q} is outside [0, 1)")));
        }
        if s <= 0.0 || m_bound <= 0.0 || p == 0 {
            return Err(VarError::InvalidArgument(
                "sparsity class needs s > 0, M > 0 and p >= 1".into(),
            ));
        }
        Ok(Self {
            variant,
            q,
            s,
            m_bound,
            p,
        })
    }
}

/// The inequality of a sparsity class that a coefficient set violates.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassViolation {
    LagCount { expected: usize, got: usize },
    ColumnBudget { lag: Option<usize>, column: usize, value: f64 },
    ColumnNorm { value: f64 },
    RowBudget { row: usize, value: f64 },
    RowNorm { value: f64 },
}

/// `|a|^q` with `0^0 = 0`, so that `q = 0` counts nonzeros.
pub fn sparsity_power(a: f64, q: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a.abs().powf(q)
    }
}

/// Checks every inequality of `class` in turn and reports the first one
/// that fails.
pub fn class_membership(
    coeffs: &[DMatrix<f64>],
    class: &SparsityClass,
) -> std::result::Result<(), ClassViolation> {
    const SLACK: f64 = 1e-12;
    if coeffs.len() != class.p {
        return Err(ClassViolation::LagCount {
            expected: class.p,
            got: coeffs.len(),
        });
    }
    let d = coeffs[0].nrows();
    let q = class.q;
    let budget = class.s * (1.0 + SLACK);
    let bound = class.m_bound * (1.0 + SLACK);

    for i in 0..d {
        let value: f64 = coeffs
            .iter()
            .flat_map(|a| a.row(i).iter().copied().collect::<Vec<_>>())
            .map(|v| sparsity_power(v, q))
            .sum();
        if value > budget {
            return Err(ClassViolation::RowBudget { row: i + 1, value });
        }
    }
    match class.variant {
        ClassVariant::PerLag => {
            for (k, a) in coeffs.iter().enumerate() {
                for j in 0..d {
                    let value: f64 = a.column(j).iter().map(|v| sparsity_power(*v, q)).sum();
                    if value > budget {
                        return Err(ClassViolation::ColumnBudget {
                            lag: Some(k + 1),
                            column: j + 1,
                            value,
                        });
                    }
                }
            }
            let value = coeffs.iter().map(norm_one).fold(0.0, f64::max);
            if value > bound {
                return Err(ClassViolation::ColumnNorm { value });
            }
        }
        ClassVariant::Summed => {
            for j in 0..d {
                let value: f64 = coeffs
                    .iter()
                    .flat_map(|a| a.column(j).iter().copied().collect::<Vec<_>>())
                    .map(|v| sparsity_power(v, q))
                    .sum();
                if value > budget {
                    return Err(ClassViolation::ColumnBudget {
                        lag: None,
                        column: j + 1,
                        value,
                    });
                }
            }
            let value: f64 = coeffs.iter().map(norm_one).sum();
            if value > bound {
                return Err(ClassViolation::ColumnNorm { value });
            }
        }
    }
    let value: f64 = coeffs.iter().map(norm_inf).sum();
    if value > bound {
        return Err(ClassViolation::RowNorm { value });
    }
    Ok(())
}

fn norm_one(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn norm_inf(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Smallest sparsity class of the given variant and exponent containing
/// `coeffs`: the tightest budget `s` and bound `M`.
pub fn tightest_class(coeffs: &[DMatrix<f64>], variant: ClassVariant, q: f64) -> SparsityClass {
    let d = coeffs[0].nrows();
    let p = coeffs.len();
    let pw = |v: &f64| sparsity_power(*v, q);
    let row_budget = (0..d)
        .map(|i| coeffs.iter().map(|a| a.row(i).iter().map(pw).sum::<f64>()).sum::<f64>())
        .fold(0.0, f64::max);
    let (col_budget, col_norm) = match variant {
        ClassVariant::PerLag => (
            coeffs
                .iter()
                .flat_map(|a| (0..d).map(move |j| a.column(j).iter().map(pw).sum::<f64>()))
                .fold(0.0, f64::max),
            coeffs.iter().map(norm_one).fold(0.0, f64::max),
        ),
        ClassVariant::Summed => (
            (0..d)
                .map(|j| coeffs.iter().map(|a| a.column(j).iter().map(pw).sum::<f64>()).sum::<f64>())
                .fold(0.0, f64::max),
            coeffs.iter().map(norm_one).sum(),
        ),
    };
    let row_norm: f64 = coeffs.iter().map(norm_inf).sum();
    SparsityClass {
        variant,
        q,
        s: row_budget.max(col_budget).max(f64::MIN_POSITIVE),
        m_bound: col_norm.max(row_norm).max(f64::MIN_POSITIVE),
        p,
    }
}

/// Largest absolute coefficient over all lags.
pub fn coeff_max_abs(coeffs: &[DMatrix<f64>]) -> f64 {
    coeffs.iter().map(max_abs).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn companion_of_var1_is_the_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        let c = companion(std::slice::from_ref(&a));
        assert_eq!(c.a_stack, a);
        assert_eq!(c.embed, DMatrix::identity(2, 2));
    }

    #[test]
    fn companion_scalar_ar2() {
        let c = companion(&[scalar(0.5), scalar(0.25)]);
        assert_eq!(c.a_stack, DMatrix::from_row_slice(2, 2, &[0.5, 0.25, 1.0, 0.0]));
    }

    #[test]
    fn companion_of_zero_var2() {
        let z = DMatrix::zeros(2, 2);
        let c = companion(&[z.clone(), z]);
        let mut expected = DMatrix::zeros(4, 4);
        expected[(2, 0)] = 1.0;
        expected[(3, 1)] = 1.0;
        assert_eq!(c.a_stack, expected);
        assert_eq!(c.embed.iter().filter(|v| **v == 1.0).count(), 2);
    }

    #[test]
    fn design_of_scalar_series() {
        let s = TimeSeries::new(DMatrix::from_column_slice(5, 1, &[1.0, 2.0, 3.0, 4.0, 5.0])).unwrap();
        let d1 = build_design(&s, 1).unwrap();
        assert_eq!(d1.y.as_slice(), &[5.0, 4.0, 3.0, 2.0]);
        assert_eq!(d1.x.as_slice(), &[4.0, 3.0, 2.0, 1.0]);
        assert_eq!(d1.n_eff(), 4);
        let d2 = build_design(&s, 2).unwrap();
        assert_eq!(d2.x.row(0).iter().copied().collect::<Vec<_>>(), vec![4.0, 3.0]);
        assert_eq!(d2.y.as_slice(), &[5.0, 4.0, 3.0]);
    }

    #[test]
    fn design_needs_more_than_p_points() {
        let s = TimeSeries::new(DMatrix::from_column_slice(2, 1, &[1.0, 2.0])).unwrap();
        assert!(matches!(
            build_design(&s, 2),
            Err(VarError::InsufficientData { .. })
        ));
    }

    #[test]
    fn forecast_examples() {
        let a = DMatrix::identity(2, 2) * 0.5;
        let s = TimeSeries::new(DMatrix::from_row_slice(1, 2, &[2.0, -2.0])).unwrap();
        let f1 = forecast(std::slice::from_ref(&a), &s, 1).unwrap();
        assert_eq!(f1.as_slice(), &[1.0, -1.0]);
        let f2 = forecast(std::slice::from_ref(&a), &s, 2).unwrap();
        assert_eq!(f2.as_slice(), &[0.5, -0.5]);
        let z = DMatrix::zeros(2, 2);
        assert_eq!(forecast(&[z], &s, 5).unwrap().as_slice(), &[0.0, 0.0]);
        assert!(forecast(std::slice::from_ref(&a), &s, 0).is_err());
    }

    #[test]
    fn forecast_var2_uses_both_lags() {
        let s = TimeSeries::new(DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 4.0])).unwrap();
        let f = forecast(&[scalar(0.5), scalar(0.25)], &s, 2).unwrap();
        // x4 = 0.5*4 + 0.25*2 = 2.5; x5 = 0.5*2.5 + 0.25*4 = 2.25
        assert_eq!(f[0], 2.25);
    }

    #[test]
    fn diagonal_is_member_dense_is_not() {
        let a = DMatrix::identity(3, 3) * 0.5;
        let cls = SparsityClass::new(ClassVariant::PerLag, 0.0, 1.0, 0.5, 1).unwrap();
        assert_eq!(class_membership(std::slice::from_ref(&a), &cls), Ok(()));

        let ones = DMatrix::from_element(2, 2, 1.0);
        let cls = SparsityClass::new(ClassVariant::PerLag, 0.0, 1.0, 10.0, 1).unwrap();
        assert!(matches!(
            class_membership(std::slice::from_ref(&ones), &cls),
            Err(ClassViolation::RowBudget { row: 1, .. })
        ));
        let mut col_dense = DMatrix::zeros(2, 2);
        col_dense[(0, 0)] = 1.0;
        col_dense[(1, 0)] = 1.0;
        assert!(matches!(
            class_membership(&[col_dense], &cls),
            Err(ClassViolation::ColumnBudget { column: 1, .. })
        ));
    }

    #[test]
    fn invalid_models_are_rejected() {
        let a = DMatrix::zeros(2, 2);
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(VarModel::new(vec![a.clone()], asym).is_err());
        let zero_var = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(VarModel::new(vec![a.clone()], zero_var).is_err());
        assert!(VarModel::new(vec![], DMatrix::identity(2, 2)).is_err());
        assert!(VarModel::new(vec![DMatrix::zeros(3, 3)], DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn simulation_is_deterministic_and_reconstructs() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]);
        let model = VarModel::with_identity_noise(vec![a.clone()]).unwrap();
        let s1 = simulate_with_innovations(&model, 50, 20, 9).unwrap();
        let s2 = simulate_with_innovations(&model, 50, 20, 9).unwrap();
        assert_eq!(s1.series, s2.series);
        let design = build_design(&s1.series, 1).unwrap();
        let resid = &design.y - &design.x * model.coefficient_block();
        for r in 0..design.n_eff() {
            let t = 49 - r;
            for j in 0..2 {
                assert!((resid[(r, j)] - s1.innovations[(t, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn companion_recursion_matches_direct_recursion() {
        let a1 = DMatrix::from_row_slice(3, 3, &[0.3, 0.1, 0.0, -0.2, 0.4, 0.1, 0.0, 0.05, 0.2]);
        let a2 = DMatrix::from_row_slice(3, 3, &[0.1, 0.0, 0.0, 0.0, -0.1, 0.0, 0.2, 0.0, 0.1]);
        let e = draw_innovations(&DMatrix::identity(3, 3), 200, 3).unwrap();
        let coeffs = [a1, a2];
        let direct = filter(&coeffs, &e);
        let stacked = filter_companion(&coeffs, &e);
        for (x, y) in direct.iter().zip(stacked.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn stacking_round_trips() {
        let a1 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let a2 = DMatrix::from_row_slice(2, 2, &[5.0, 6.0, 7.0, 8.0]);
        let b = stack_coefficients(&[a1.clone(), a2.clone()]);
        assert_eq!(b[(0, 1)], 3.0);
        assert_eq!(unstack_coefficients(&b, 2).unwrap(), vec![a1, a2]);
    }
}
