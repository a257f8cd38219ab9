use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::dantzig::dantzig_row;
use super::lasso::{self, lambda_max_row, lambda_max_vec, lasso_row, lasso_vec, Moments};
use crate::covariance::{weighting_matrix, CvSpec, ResidualMatrix};
use crate::error::{Result, VarError};
use crate::model::{build_design, unstack_coefficients, SampleDesign, TimeSeries};
use crate::thresholding::{threshold_scalar, ThresholdRule};
use crate::tuning::{self, degrees_of_freedom, lambda_grid, select, TuningRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    VecLasso,
    RowLasso,
    RowDantzig,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::VecLasso => "Vec-Lasso",
            Method::RowLasso => "Row-Lasso",
            Method::RowDantzig => "Row-Dantzig",
        }
    }

    pub fn default_ratio(&self) -> f64 {
        match self {
            Method::RowDantzig => tuning::DEFAULT_DANTZIG_RATIO,
            _ => tuning::DEFAULT_LASSO_RATIO,
        }
    }
}

/// Thresholding (T), standardization (S) and adaptive reweighting (A).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct Modifications {
    pub threshold: bool,
    pub standardize: bool,
    pub adaptive: bool,
}

impl Modifications {
    pub const NONE: Modifications = Modifications {
        threshold: false,
        standardize: false,
        adaptive: false,
    };

    /// Parses a combination of the letters `T`, `S`, `A` (any order,
    /// `plain` or empty for none).
    pub fn parse(s: &str) -> Result<Self> {
        let mut m = Modifications::NONE;
        let t = s.trim();
        if t.is_empty() || t.eq_ignore_ascii_case("plain") || t.eq_ignore_ascii_case("none") {
            return Ok(m);
        }
        for c in t.chars() {
            let flag = match c.to_ascii_uppercase() {
                'T' => &mut m.threshold,
                'S' => &mut m.standardize,
                'A' => &mut m.adaptive,
                other => {
                    return Err(VarError::Parse(format!(
                        "unknown modification '{other}' in '{s}' (expected letters T, S, A)"
                    )))
                }
            };
            if *flag {
                return Err(VarError::Parse(format!("modification '{c}' repeated in '{s}'")));
            }
            *flag = true;
        }
        Ok(m)
    }
}

impl fmt::Display for Modifications {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        if self.threshold {
            s.push('T');
        }
        if self.standardize {
            s.push('S');
        }
        if self.adaptive {
            s.push('A');
        }
        if s.is_empty() {
            s.push_str("plain");
        }
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub method: Method,
    pub modifications: Modifications,
    pub tuning: TuningRule,
    pub grid_size: usize,
    /// Smallest grid value relative to the largest; method default when `None`.
    pub lambda_ratio: Option<f64>,
    pub threshold_rule: ThresholdRule,
    /// Threshold level as a multiple of the selected penalty.
    pub threshold_multiplier: f64,
    /// Reuse the first-pass penalty in the adaptive pass instead of re-tuning.
    pub reuse_lambda: bool,
    /// Rule for the residual covariance behind the Vec-Lasso weighting.
    pub covariance_rule: ThresholdRule,
    pub cv_seed: u64,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl EstimatorConfig {
    pub fn new(method: Method, modifications: Modifications, tuning: TuningRule) -> Self {
        Self {
            method,
            modifications,
            tuning,
            grid_size: tuning::DEFAULT_GRID_SIZE,
            lambda_ratio: None,
            threshold_rule: ThresholdRule::default(),
            threshold_multiplier: 1.0,
            reuse_lambda: false,
            covariance_rule: ThresholdRule::Soft,
            cv_seed: 0,
            tol: lasso::DEFAULT_TOL,
            max_sweeps: lasso::DEFAULT_MAX_SWEEPS,
        }
    }

    pub fn ratio(&self) -> f64 {
        self.lambda_ratio.unwrap_or_else(|| self.method.default_ratio())
    }

    /// Display name such as `Row-Lasso TSA BIC`.
    pub fn label(&self) -> String {
        let rule = match self.tuning {
            TuningRule::Bic => "BIC".to_string(),
            TuningRule::Eric { nu } if nu == 1.0 => "ERIC".to_string(),
            TuningRule::Eric { nu } => format!("ERIC{nu}"),
        };
        format!("{} {} {}", self.method.name(), self.modifications, rule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(VarError::InvalidArgument(format!("grid size {}", self.grid_size)));
        }
        let r = self.ratio();
        if !(r > 0.0 && r < 1.0) {
            return Err(VarError::InvalidArgument(format!("grid ratio {r}")));
        }
        if !(self.threshold_multiplier >= 0.0) || !self.threshold_multiplier.is_finite() {
            return Err(VarError::InvalidArgument(format!(
                "threshold multiplier {}",
                self.threshold_multiplier
            )));
        }
        if let TuningRule::Eric { nu } = self.tuning {
            TuningRule::eric(nu)?;
        }
        if let ThresholdRule::Adaptive { nu } = self.threshold_rule {
            ThresholdRule::adaptive(nu)?;
        }
        Ok(())
    }
}

/// Record of what a fit did.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub label: String,
    pub notes: Vec<String>,
    /// Rows whose tuning failed; they are returned as zero rows.
    pub row_failures: Vec<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarEstimate {
    /// `dp x d` block `(A_1^T; ...; A_p^T)` on the original scale.
    pub b_hat: DMatrix<f64>,
    pub coeffs: Vec<DMatrix<f64>>,
    /// Selected penalty per row (all equal for the vectorized Lasso).
    pub lambdas: Vec<f64>,
    pub provenance: Provenance,
}

impl VarEstimate {
    pub fn from_block(b_hat: DMatrix<f64>, p: usize, lambdas: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if b_hat.iter().any(|v| !v.is_finite()) {
            return Err(VarError::Internal("non-finite coefficient estimate".into()));
        }
        let coeffs = unstack_coefficients(&b_hat, p)?;
        Ok(Self {
            b_hat,
            coeffs,
            lambdas,
            provenance,
        })
    }

    pub fn p(&self) -> usize {
        self.coeffs.len()
    }
}

/// A design rescaled to unit sample standard deviation per component.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub design: SampleDesign,
    /// Per-component sample standard deviations.
    pub scales: DVector<f64>,
}

/// Divides every component of responses and lagged regressors by the sample
/// standard deviation of that component in `series`.
pub fn standardize(design: &SampleDesign, series: &TimeSeries) -> Result<Standardized> {
    let d = series.d();
    if design.d != d {
        return Err(VarError::Dimension(format!(
            "design of dimension {} against a series of dimension {d}",
            design.d
        )));
    }
    let n = series.n();
    if n < 2 {
        return Err(VarError::InsufficientData { needed: 1, got: n });
    }
    let mut scales = DVector::zeros(d);
    for (j, col) in series.values().column_iter().enumerate() {
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0) {
            return Err(VarError::Degenerate(format!(
                "component {} has zero sample variance",
                j + 1
            )));
        }
        scales[j] = sd;
    }
    let mut y = design.y.clone();
    for j in 0..d {
        y.column_mut(j).unscale_mut(scales[j]);
    }
    let mut x = design.x.clone();
    for k in 0..design.p {
        for j in 0..d {
            x.column_mut(k * d + j).unscale_mut(scales[j]);
        }
    }
    Ok(Standardized {
        design: SampleDesign {
            y,
            x,
            p: design.p,
            d,
        },
        scales,
    })
}

/// `B = (I_p (x) W)^-1 B_std W` with `W = diag(scales)`.
pub fn back_transform(b_std: &DMatrix<f64>, scales: &DVector<f64>) -> DMatrix<f64> {
    let d = scales.len();
    DMatrix::from_fn(b_std.nrows(), b_std.ncols(), |r, j| {
        b_std[(r, j)] / scales[r % d] * scales[j]
    })
}

/// `1 / (|B_ij| + 1 / sqrt(n))`.
pub fn adaptive_weights(first_pass: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let floor = 1.0 / (n as f64).sqrt();
    first_pass.map(|b| 1.0 / (b.abs() + floor))
}

struct Pass {
    b: DMatrix<f64>,
    lambdas: Vec<f64>,
    failures: Vec<(usize, String)>,
}

fn row_score(moments: &Moments, rule: TuningRule, j: usize, beta: &DVector<f64>, lambda: f64) -> Result<f64> {
    let rss = moments.rss(j, beta);
    rule.score(rss, degrees_of_freedom(beta.iter()), moments.n_eff, lambda)
}

fn fit_row_at(
    config: &EstimatorConfig,
    moments: &Moments,
    j: usize,
    lambda: f64,
    weights: &[f64],
    warm: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    match config.method {
        Method::RowLasso => {
            lasso_row(moments, j, lambda, weights, warm, config.tol, config.max_sweeps).map(|f| f.beta)
        }
        Method::RowDantzig => dantzig_row(moments, j, lambda, weights),
        Method::VecLasso => Err(VarError::Internal("row fit requested for Vec-Lasso".into())),
    }
}

fn row_pass(
    config: &EstimatorConfig,
    moments: &Moments,
    weights: &DMatrix<f64>,
    fixed: Option<&[f64]>,
) -> Result<Pass> {
    let d = moments.d();
    let dp = moments.dp();
    let results: Vec<Result<(DVector<f64>, f64)>> = (0..d)
        .into_par_iter()
        .map(|j| {
            let w: Vec<f64> = weights.column(j).iter().copied().collect();
            if let Some(lambdas) = fixed {
                let beta = fit_row_at(config, moments, j, lambdas[j], &w, None)?;
                return Ok((beta, lambdas[j]));
            }
            let lmax = match config.method {
                Method::RowDantzig => moments.cross.column(j).amax(),
                _ => lambda_max_row(moments, j, &w),
            };
            if !(lmax > 0.0) {
                return Ok((DVector::zeros(dp), 0.0));
            }
            let grid = lambda_grid(lmax, config.grid_size, config.ratio())?;
            let sel = select(
                &grid,
                |lambda, warm| fit_row_at(config, moments, j, lambda, &w, warm),
                |beta, lambda| row_score(moments, config.tuning, j, beta, lambda),
            )?;
            Ok((sel.value, sel.lambda))
        })
        .collect();
    let mut b = DMatrix::zeros(dp, d);
    let mut lambdas = vec![0.0; d];
    let mut failures = Vec::new();
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Ok((beta, lambda)) => {
                b.set_column(j, &beta);
                lambdas[j] = lambda;
            }
            Err(e) => {
                lambdas[j] = f64::NAN;
                failures.push((j, e.to_string()));
            }
        }
    }
    if failures.len() == d {
        return Err(VarError::NotConverged {
            what: "every row fit",
            iterations: 0,
            last: None,
        });
    }
    Ok(Pass { b, lambdas, failures })
}

fn vec_pass(
    config: &EstimatorConfig,
    moments: &Moments,
    omega: &DMatrix<f64>,
    weights: &DMatrix<f64>,
    fixed: Option<f64>,
) -> Result<Pass> {
    let d = moments.d();
    let solve = |lambda: f64, warm: Option<&DMatrix<f64>>| {
        lasso_vec(moments, omega, lambda, weights, warm, config.tol, config.max_sweeps).map(|f| f.b)
    };
    let (b, lambda) = match fixed {
        Some(lambda) => (solve(lambda, None)?, lambda),
        None => {
            let lmax = lambda_max_vec(moments, omega, weights);
            if !(lmax > 0.0) {
                (DMatrix::zeros(moments.dp(), d), 0.0)
            } else {
                let grid = lambda_grid(lmax, config.grid_size, config.ratio())?;
                let sel = select(&grid, solve, |b, lambda| {
                    (0..d).try_fold(0.0, |acc, j| {
                        let beta = b.column(j).into_owned();
                        row_score(moments, config.tuning, j, &beta, lambda).map(|s| acc + s)
                    })
                })?;
                (sel.value, sel.lambda)
            }
        }
    };
    Ok(Pass {
        b,
        lambdas: vec![lambda; d],
        failures: Vec::new(),
    })
}

/// Fits a VAR(p) to `series` with the configured estimator and
/// modifications.
///
/// Order of operations: optional standardization, a first tuned fit, an
/// optional adaptive refit with weights from the first fit, optional
/// thresholding of each column of the coefficient block at its selected
/// penalty times the multiplier, and the back-transformation.
pub fn fit(config: &EstimatorConfig, series: &TimeSeries, p: usize) -> Result<VarEstimate> {
    config.validate()?;
    let design = build_design(series, p)?;
    let d = design.d;
    let dp = design.dp();
    let mut provenance = Provenance {
        label: config.label(),
        ..Default::default()
    };
    let (design, scales) = if config.modifications.standardize {
        let s = standardize(&design, series)?;
        (s.design, Some(s.scales))
    } else {
        (design, None)
    };
    let moments = Moments::from_design(&design);

    let omega = if config.method == Method::VecLasso {
        let mut row_cfg = config.clone();
        row_cfg.method = Method::RowLasso;
        row_cfg.lambda_ratio = None;
        let pilot = row_pass(&row_cfg, &moments, &DMatrix::from_element(dp, d, 1.0), None)?;
        let res = ResidualMatrix::new(&design.y - &design.x * &pilot.b, true);
        let cv = CvSpec {
            seed: config.cv_seed,
            ..CvSpec::default()
        };
        let (omega, fallback) = weighting_matrix(&res, config.covariance_rule, &cv)?;
        if fallback {
            provenance
                .notes
                .push("weighting: thresholded covariance not positive definite, diagonal used".into());
        }
        Some(omega)
    } else {
        None
    };

    let ones = DMatrix::from_element(dp, d, 1.0);
    let run = |weights: &DMatrix<f64>, fixed: Option<&[f64]>| match &omega {
        Some(om) => vec_pass(config, &moments, om, weights, fixed.map(|l| l[0])),
        None => row_pass(config, &moments, weights, fixed),
    };
    let mut pass = run(&ones, None)?;

    if config.modifications.adaptive {
        let weights = adaptive_weights(&pass.b, series.n());
        let fixed = if config.reuse_lambda {
            provenance.notes.push("adaptive pass reuses first-pass lambda".into());
            if pass.lambdas.iter().any(|l| l.is_nan()) {
                None
            } else {
                Some(pass.lambdas.clone())
            }
        } else {
            provenance.notes.push("adaptive pass re-selects lambda".into());
            None
        };
        let first_failures = std::mem::take(&mut pass.failures);
        pass = run(&weights, fixed.as_deref())?;
        for f in first_failures {
            if !pass.failures.iter().any(|(j, _)| *j == f.0) {
                pass.failures.push(f);
            }
        }
    }

    if config.modifications.threshold {
        if !config.threshold_rule.is_conforming() {
            provenance.notes.push(format!(
                "warning: {} thresholding does not satisfy the shrinkage-domination condition",
                config.threshold_rule.name()
            ));
        }
        for j in 0..d {
            // the vectorized penalty acts on Omega-weighted scores
            let scale = omega.as_ref().map_or(1.0, |om| om[(j, j)]);
            let level = pass.lambdas[j] * config.threshold_multiplier / scale;
            if level.is_finite() {
                for i in 0..dp {
                    pass.b[(i, j)] = threshold_scalar(config.threshold_rule, level, pass.b[(i, j)]);
                }
            }
        }
        provenance
            .notes
            .push(format!("threshold: {} at {} x lambda", config.threshold_rule.name(), config.threshold_multiplier));
    }
    if let TuningRule::Eric { nu } = config.tuning {
        provenance.notes.push(format!(
            "tuning: ERIC with nu = {nu}, penalty 2 nu df log(rss / lambda)"
        ));
    }

    let b_hat = match &scales {
        Some(s) => back_transform(&pass.b, s),
        None => pass.b,
    };
    provenance.row_failures = pass.failures;
    VarEstimate::from_block(b_hat, p, pass.lambdas, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modification_labels() {
        let m = Modifications::parse("TSA").unwrap();
        assert!(m.threshold && m.standardize && m.adaptive);
        assert_eq!(m.to_string(), "TSA");
        assert_eq!(Modifications::parse("as").unwrap().to_string(), "SA");
        assert_eq!(Modifications::parse("plain").unwrap(), Modifications::NONE);
        assert!(Modifications::parse("TX").is_err());
        assert!(Modifications::parse("SS").is_err());
        let c = EstimatorConfig::new(Method::RowLasso, m, TuningRule::Bic);
        assert_eq!(c.label(), "Row-Lasso TSA BIC");
    }

    #[test]
    fn adaptive_weight_formula() {
        let b = DMatrix::from_row_slice(1, 3, &[0.0, 0.9, -0.2]);
        let w = adaptive_weights(&b, 100);
        assert_eq!(w[(0, 0)], 10.0);
        assert!((w[(0, 1)] - 1.0).abs() < 1e-15);
        assert!(w[(0, 2)] < w[(0, 0)] && w[(0, 2)] > w[(0, 1)]);
    }

    #[test]
    fn back_transform_inverts_scaling() {
        let scales = DVector::from_vec(vec![2.0, 0.5]);
        let b = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let t = back_transform(&b, &scales);
        assert_eq!(t[(0, 1)], 2.0 / 2.0 * 0.5);
        assert_eq!(t[(3, 0)], 7.0 / 0.5 * 2.0);
    }

    #[test]
    fn constant_series_cannot_be_standardized() {
        let mut v = DMatrix::from_fn(10, 2, |t, _| t as f64);
        v.column_mut(1).fill(3.0);
        let s = TimeSeries::new(v).unwrap();
        let design = build_design(&s, 1).unwrap();
        let err = standardize(&design, &s).unwrap_err();
        assert!(err.to_string().contains("component 2"));
    }
}
