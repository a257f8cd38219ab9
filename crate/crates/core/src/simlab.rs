//! Data-generating processes of the two simulation designs, random sparse
//! coefficient generation and the Monte-Carlo benchmark driver.

use std::fmt;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::covariance::{residuals, sample_cov, thresholded_cov, CvSpec};
use crate::error::{Result, VarError};
use crate::estimators::{fit, EstimatorConfig};
use crate::linalg::{spectral_radius, DEFAULT_RADIUS_MAX_ITER, DEFAULT_RADIUS_TOL};
use crate::metrics::{
    crit_gamma_error, crit_param_error, crit_spectral_error, scaled_forecast_error, NormKind,
    DEFAULT_N_FREQ,
};
use crate::model::{
    class_membership, companion, forecast, simulate, ClassVariant, SparsityClass, VarModel,
    DEFAULT_BURN_IN,
};
use crate::thresholding::ThresholdRule;

/// Seed under which the frozen first-design coefficients were drawn.
pub const EXAMPLE1_SEED: u64 = 20_190_417;
pub const EXAMPLE1_D: usize = 14;
pub const EXAMPLE1_P: usize = 4;
pub const EXAMPLE1_S: usize = 5;
pub const EXAMPLE1_RHO: f64 = 0.8;

const EXAMPLE1_FILE: &str = include_str!("../data/example1_coefficients.txt");

/// Heterogeneous innovation variances of the `DT` and `FT` designs.
pub const DT_VARIANCES: [f64; 14] = [
    1.88e-2, 2.61e-3, 4.40e-3, 3.04e-6, 1.58e-6, 3.99e-3, 1.51e-5, 2.51e-5, 1.34e-6, 1.03e-2,
    4.32e-3, 9.77e-6, 3.93e-5, 2.03e-6,
];
pub const FM_EIG_MAX: f64 = 2.5;
pub const FM_EIG_MIN: f64 = 0.21;
/// Extreme eigenvalues quoted for the `FT` design.
pub const FT_EIG_MAX: f64 = 1.92e-2;
pub const FT_EIG_MIN: f64 = 4.45e-7;

/// SplitMix64 finalizer of `master + (index + 1) * golden`; distinct indices
/// give distinct seeds.
pub fn replication_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_generator_args(d: usize, s: usize, rho: f64, p: usize) -> Result<()> {
    if d == 0 || s == 0 || s > d || p == 0 {
        return Err(VarError::InvalidArgument(format!(
            "need 1 <= s <= d and p >= 1, got d={d}, s={s}, p={p}"
        )));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(VarError::InvalidArgument(format!("rho = {rho} is outside (0, 1)")));
    }
    Ok(())
}

fn radius(coeffs: &[DMatrix<f64>]) -> Result<f64> {
    spectral_radius(&companion(coeffs).a_stack, DEFAULT_RADIUS_TOL, DEFAULT_RADIUS_MAX_ITER)
}

/// `A_k <- c^k A_k`, which multiplies every companion eigenvalue by `c`.
fn scale_lags(coeffs: &mut [DMatrix<f64>], c: f64) {
    for (k, a) in coeffs.iter_mut().enumerate() {
        *a *= c.powi(k as i32 + 1);
    }
}

/// Keeps the `s` largest-magnitude entries among `cells`; ties go to the
/// earlier cell.
fn keep_largest(coeffs: &mut [DMatrix<f64>], cells: &[(usize, usize, usize)], s: usize) {
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&x, &y| {
        let (kx, ix, jx) = cells[x];
        let (ky, iy, jy) = cells[y];
        coeffs[ky][(iy, jy)]
            .abs()
            .total_cmp(&coeffs[kx][(ix, jx)].abs())
            .then(x.cmp(&y))
    });
    for &c in &order[s.min(order.len())..] {
        let (k, i, j) = cells[c];
        coeffs[k][(i, j)] = 0.0;
    }
}

/// Zeroes entries so that each row, then each column, keeps at most `s`
/// nonzeros counted over all lags.
fn sparsify(coeffs: &mut [DMatrix<f64>], s: usize) {
    let d = coeffs[0].nrows();
    let p = coeffs.len();
    for i in 0..d {
        let cells: Vec<_> = (0..p).flat_map(|k| (0..d).map(move |j| (k, i, j))).collect();
        keep_largest(coeffs, &cells, s);
    }
    for j in 0..d {
        let cells: Vec<_> = (0..p).flat_map(|k| (0..d).map(move |i| (k, i, j))).collect();
        keep_largest(coeffs, &cells, s);
    }
}

#[cfg(test)]
fn count_nonzero<'a>(it: impl Iterator<Item = &'a f64>) -> usize {
    it.filter(|v| **v != 0.0).count()
}

/// Puts `rho` at the (1,1) entry of the first lag, dropping the weakest
/// other entries of the first row and column when that breaks a budget.
fn seed_first_entry(coeffs: &mut [DMatrix<f64>], s: usize, rho: f64) {
    let d = coeffs[0].nrows();
    let p = coeffs.len();
    coeffs[0][(0, 0)] = rho;
    let row_cells: Vec<_> = (0..p)
        .flat_map(|k| (0..d).map(move |j| (k, 0, j)))
        .filter(|&(k, _, j)| !(k == 0 && j == 0))
        .collect();
    let col_cells: Vec<_> = (0..p)
        .flat_map(|k| (0..d).map(move |i| (k, i, 0)))
        .filter(|&(k, i, _)| !(k == 0 && i == 0))
        .collect();
    for cells in [row_cells, col_cells] {
        let used = cells.iter().filter(|&&(k, i, j)| coeffs[k][(i, j)] != 0.0).count();
        if used + 1 > s {
            keep_largest(coeffs, &cells, s - 1);
        }
    }
}

fn generate(d: usize, s: usize, rho: f64, p: usize, seed: u64) -> Result<Vec<DMatrix<f64>>> {
    check_generator_args(d, s, rho, p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs: Vec<DMatrix<f64>> = (0..p)
        .map(|_| {
            let v: Vec<f64> = (0..d * d).map(|_| StandardNormal.sample(&mut rng)).collect();
            DMatrix::from_row_slice(d, d, &v)
        })
        .collect();
    // step 1: bring the draw inside the unit circle
    let r0 = radius(&coeffs)?;
    if r0 > 0.0 {
        scale_lags(&mut coeffs, 0.9 / r0);
    }
    // steps 2 and 3
    sparsify(&mut coeffs, s);
    // step 4
    let mut r = radius(&coeffs)?;
    if r <= 1e-12 {
        seed_first_entry(&mut coeffs, s, rho);
        r = radius(&coeffs)?;
        if r <= 1e-12 {
            for a in coeffs.iter_mut() {
                a.fill(0.0);
            }
            coeffs[0][(0, 0)] = rho;
            r = rho;
        }
    }
    scale_lags(&mut coeffs, rho / r);
    let achieved = radius(&coeffs)?;
    if (achieved - rho).abs() > 1e-8 {
        return Err(VarError::Degenerate(format!(
            "rescaled radius {achieved} misses the target {rho}"
        )));
    }
    let variant = if p == 1 { ClassVariant::PerLag } else { ClassVariant::Summed };
    let class = SparsityClass::new(variant, 0.0, s as f64, f64::MAX, p)?;
    class_membership(&coeffs, &class)
        .map_err(|v| VarError::Internal(format!("generated coefficients leave their class: {v:?}")))?;
    Ok(coeffs)
}

/// Random sparse VAR(1) matrix with at most `s` nonzeros per row and column
/// and spectral radius `rho`.
pub fn random_sparse_var1(d: usize, s: usize, rho: f64, seed: u64) -> Result<DMatrix<f64>> {
    Ok(generate(d, s, rho, 1, seed)?.remove(0))
}

/// Lag-`p` version with row and column budgets counted over all lags and the
/// companion spectral radius set to `rho`. A degenerate draw is an error;
/// callers redraw with another seed.
pub fn random_sparse_varp(d: usize, s: usize, rho: f64, p: usize, seed: u64) -> Result<Vec<DMatrix<f64>>> {
    generate(d, s, rho, p, seed)
}

/// Frozen coefficients of the first simulation design.
pub fn example1_coefficients() -> Vec<DMatrix<f64>> {
    static CACHE: OnceLock<Vec<DMatrix<f64>>> = OnceLock::new();
    CACHE
        .get_or_init(|| {
            crate::io::parse_model(EXAMPLE1_FILE)
                .expect("frozen coefficient file is valid")
                .coeffs()
                .to_vec()
        })
        .clone()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Example1Variant {
    /// Identity.
    Dm,
    /// Heterogeneous diagonal.
    Dt,
    /// Non-sparse with unit variances.
    Fm,
    /// `Fm` correlation with the `Dt` variances.
    Ft,
}

impl Example1Variant {
    pub const ALL: [Example1Variant; 4] = [
        Example1Variant::Dm,
        Example1Variant::Dt,
        Example1Variant::Fm,
        Example1Variant::Ft,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Example1Variant::Dm => "DM",
            Example1Variant::Dt => "DT",
            Example1Variant::Fm => "FM",
            Example1Variant::Ft => "FT",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| VarError::Parse(format!("unknown variant '{s}' (DM, DT, FM, FT)")))
    }
}

/// Unit-diagonal matrix `c0 I + beta u u^T - gamma v v^T` with `u` the
/// normalized ones vector and `v` the normalized alternating-sign vector.
/// Its eigenvalues are `FM_EIG_MAX` (along `u`), `FM_EIG_MIN` (along `v`)
/// and `c0` with multiplicity `d - 2`.
fn fm_matrix(d: usize) -> DMatrix<f64> {
    let df = d as f64;
    let c0 = (df - FM_EIG_MAX - FM_EIG_MIN) / (df - 2.0);
    let beta = FM_EIG_MAX - c0;
    let gamma = c0 - FM_EIG_MIN;
    let u = DVector::from_element(d, 1.0 / df.sqrt());
    let v = DVector::from_fn(d, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 } / df.sqrt());
    let mut m = DMatrix::identity(d, d) * c0 + &u * u.transpose() * beta - &v * v.transpose() * gamma;
    for i in 0..d {
        m[(i, i)] = 1.0;
    }
    crate::linalg::symmetrize(m)
}

pub fn example1_sigma(variant: Example1Variant) -> DMatrix<f64> {
    let d = EXAMPLE1_D;
    let dt = DMatrix::from_diagonal(&DVector::from_row_slice(&DT_VARIANCES));
    match variant {
        Example1Variant::Dm => DMatrix::identity(d, d),
        Example1Variant::Dt => dt,
        Example1Variant::Fm => fm_matrix(d),
        Example1Variant::Ft => {
            let root = dt.map(f64::sqrt);
            crate::linalg::symmetrize(&root * fm_matrix(d) * &root)
        }
    }
}

/// Extreme eigenvalues of the `FT` matrix and their relative distance to
/// the quoted values.
pub fn ft_calibration() -> ((f64, f64), (f64, f64)) {
    let eig = example1_sigma(Example1Variant::Ft).symmetric_eigenvalues();
    let hi = eig.max();
    let lo = eig.min();
    (
        (hi, lo),
        ((hi - FT_EIG_MAX).abs() / FT_EIG_MAX, (lo - FT_EIG_MIN).abs() / FT_EIG_MIN),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dgp {
    /// Frozen VAR(4) in dimension 14 with one of four innovation covariances.
    Example1(Example1Variant),
    /// Random sparse VAR(1) with identity innovation covariance.
    Example2 { d: usize, s: usize, rho: f64 },
}

impl fmt::Display for Dgp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dgp::Example1(v) => write!(f, "example1-{}", v.name()),
            Dgp::Example2 { d, s, rho } => write!(f, "example2-d{d}-s{s}-rho{rho}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorEntry {
    Fitted(EstimatorConfig),
    /// Returns the true coefficients and innovation covariance.
    Oracle,
}

impl EstimatorEntry {
    pub fn label(&self) -> String {
        match self {
            EstimatorEntry::Fitted(c) => c.label(),
            EstimatorEntry::Oracle => "Oracle".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub dgp: Dgp,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorEntry>,
    pub horizon: usize,
    /// Norm of criteria ii) and iii).
    pub norm: NormKind,
    pub n_freq: usize,
    /// Draw a new coefficient set per replication instead of one per scenario.
    pub redraw: bool,
    /// Seed of the fixed coefficient draw; the scenario seed when `None`.
    pub model_seed: Option<u64>,
    pub burn_in: usize,
}

impl Scenario {
    pub fn new(dgp: Dgp, n: usize, replications: usize, seed: u64, estimators: Vec<EstimatorEntry>) -> Self {
        let norm = match dgp {
            Dgp::Example1(_) => NormKind::One,
            Dgp::Example2 { .. } => NormKind::Inf,
        };
        Self {
            name: dgp.to_string(),
            dgp,
            n,
            replications,
            seed,
            estimators,
            horizon: 1,
            norm,
            n_freq: DEFAULT_N_FREQ,
            redraw: false,
            model_seed: None,
            burn_in: DEFAULT_BURN_IN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.replications == 0 || self.horizon == 0 || self.n_freq == 0 {
            return Err(VarError::InvalidArgument(
                "n, replications, horizon and n_freq must be positive".into(),
            ));
        }
        if let Dgp::Example2 { d, s, rho } = self.dgp {
            check_generator_args(d, s, rho, 1)?;
        }
        if self.estimators.is_empty() {
            return Err(VarError::InvalidArgument("scenario has no estimators".into()));
        }
        for e in &self.estimators {
            if let EstimatorEntry::Fitted(c) = e {
                c.validate()?;
            }
        }
        Ok(())
    }

    /// True model of the scenario; `draw_seed` selects the coefficient draw
    /// of the random design.
    pub fn model_for(&self, draw_seed: u64) -> Result<VarModel> {
        match self.dgp {
            Dgp::Example1(v) => VarModel::new(example1_coefficients(), example1_sigma(v)),
            Dgp::Example2 { d, s, rho } => {
                let mut last = None;
                for k in 0..16u64 {
                    match random_sparse_var1(d, s, rho, draw_seed.wrapping_add(k)) {
                        Ok(a) => return VarModel::with_identity_noise(vec![a]),
                        Err(e @ VarError::Degenerate(_)) => last = Some(e),
                        Err(e) => return Err(e),
                    }
                }
                Err(last.unwrap_or_else(|| VarError::Degenerate("no usable draw".into())))
            }
        }
    }

    pub fn model(&self) -> Result<VarModel> {
        self.model_for(self.model_seed.unwrap_or(self.seed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Criterion {
    Param,
    Gamma,
    Spectral,
    Forecast,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [
        Criterion::Param,
        Criterion::Gamma,
        Criterion::Spectral,
        Criterion::Forecast,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Param => "param",
            Criterion::Gamma => "gamma",
            Criterion::Spectral => "spectral",
            Criterion::Forecast => "forecast",
        }
    }
}

/// Mean, standard error and failure count of one criterion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
    pub failures: usize,
}

/// Aggregates over the finite entries; the result does not depend on the
/// order of `values`.
pub fn aggregate(values: &[f64]) -> Aggregate {
    let mut finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    finite.sort_by(f64::total_cmp);
    let k = finite.len();
    let failures = values.len() - k;
    if k == 0 {
        return Aggregate {
            mean: f64::NAN,
            se: f64::NAN,
            count: 0,
            failures,
        };
    }
    let mean = finite.iter().sum::<f64>() / k as f64;
    let se = if k > 1 {
        let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        (var / k as f64).sqrt()
    } else {
        0.0
    };
    Aggregate {
        mean,
        se,
        count: k,
        failures,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub scenario: String,
    pub estimator: String,
    pub criterion: Criterion,
    pub aggregate: Aggregate,
    pub replications: usize,
    pub seed: u64,
}

/// A failed replication of one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureRecord {
    pub estimator: String,
    pub replication: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    pub rows: Vec<BenchmarkRow>,
    pub failures: Vec<FailureRecord>,
}

impl BenchmarkResult {
    pub fn get(&self, estimator: &str, criterion: Criterion) -> Option<&Aggregate> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.criterion == criterion)
            .map(|r| &r.aggregate)
    }

    pub fn csv_header() -> &'static str {
        "scenario,estimator,criterion,mean,se,failures,R,seed"
    }

    pub fn to_csv_rows(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.scenario,
                r.estimator,
                r.criterion.name(),
                crate::io::format_f64(r.aggregate.mean),
                crate::io::format_f64(r.aggregate.se),
                r.aggregate.failures,
                r.replications,
                r.seed
            ));
        }
        out
    }
}

/// Innovation covariance estimate of a fitted model: soft-thresholded
/// covariance of the centered residuals, or the sample covariance when
/// cross-validation cannot run.
pub fn residual_sigma(series: &crate::model::TimeSeries, coeffs: &[DMatrix<f64>], cv_seed: u64) -> Result<DMatrix<f64>> {
    let res = residuals(series, coeffs, true)?;
    let cv = CvSpec {
        seed: cv_seed,
        ..CvSpec::default()
    };
    match thresholded_cov(&res, ThresholdRule::Soft, &cv) {
        Ok(t) => Ok(t.matrix),
        Err(_) => sample_cov(&res),
    }
}

/// Criteria of one estimator on one replication; non-finite marks a failure.
type ReplicationScores = Vec<[f64; 4]>;

fn score_replication(
    scenario: &Scenario,
    model: &VarModel,
    rep_seed: u64,
    failures: &mut Vec<(usize, String)>,
) -> Result<ReplicationScores> {
    let n = scenario.n;
    let h = scenario.horizon;
    let full = simulate(model, n + h, scenario.burn_in, rep_seed)?;
    let sample = full.head(n)?;
    let realized = full.at(n + h);
    let mut out = Vec::with_capacity(scenario.estimators.len());
    for (e, entry) in scenario.estimators.iter().enumerate() {
        let fitted: Result<(Vec<DMatrix<f64>>, DMatrix<f64>)> = match entry {
            EstimatorEntry::Oracle => Ok((model.coeffs().to_vec(), model.sigma().clone())),
            EstimatorEntry::Fitted(cfg) => {
                let mut cfg = cfg.clone();
                cfg.cv_seed = rep_seed;
                fit(&cfg, &sample, model.p()).and_then(|est| {
                    let sigma = residual_sigma(&sample, &est.coeffs, rep_seed)?;
                    Ok((est.coeffs, sigma))
                })
            }
        };
        let (coeffs, sigma) = match fitted {
            Ok(v) => v,
            Err(err) => {
                failures.push((e, err.to_string()));
                out.push([f64::NAN; 4]);
                continue;
            }
        };
        let finite_or_nan = |r: Result<f64>| r.ok().filter(|v| v.is_finite()).unwrap_or(f64::NAN);
        let c1 = finite_or_nan(crit_param_error(model.coeffs(), &coeffs));
        let c2 = finite_or_nan(crit_gamma_error(model, &coeffs, &sigma, scenario.norm));
        let c3 = finite_or_nan(crit_spectral_error(model, &coeffs, &sigma, scenario.norm, scenario.n_freq));
        let c4 = finite_or_nan(
            forecast(&coeffs, &sample, h).map(|fc| scaled_forecast_error(&fc, &realized, model.sigma())),
        );
        out.push([c1, c2, c3, c4]);
    }
    Ok(out)
}

/// Runs every estimator of `scenario` on `R` seeded replications and
/// aggregates criteria i)-iv). Estimator failures are recorded with the
/// replication seed and do not stop the scenario.
pub fn run_monte_carlo(scenario: &Scenario) -> Result<BenchmarkResult> {
    scenario.validate()?;
    let fixed = if scenario.redraw { None } else { Some(scenario.model()?) };
    let per_rep: Vec<Result<(ReplicationScores, Vec<(usize, String)>)>> = (0..scenario.replications)
        .into_par_iter()
        .map(|r| {
            let rep_seed = replication_seed(scenario.seed, r as u64);
            let drawn;
            let model = match &fixed {
                Some(m) => m,
                None => {
                    drawn = scenario.model_for(replication_seed(!scenario.seed, r as u64))?;
                    &drawn
                }
            };
            let mut failures = Vec::new();
            let scores = score_replication(scenario, model, rep_seed, &mut failures)?;
            Ok((scores, failures))
        })
        .collect();

    let m = scenario.estimators.len();
    let mut values = vec![[const { Vec::new() }; 4]; m];
    let mut failures = Vec::new();
    for (r, rep) in per_rep.into_iter().enumerate() {
        let (scores, fails) = rep?;
        for (e, row) in scores.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                values[e][c].push(*v);
            }
        }
        for (e, message) in fails {
            failures.push(FailureRecord {
                estimator: scenario.estimators[e].label(),
                replication: r,
                seed: replication_seed(scenario.seed, r as u64),
                message,
            });
        }
    }
    let mut rows = Vec::with_capacity(4 * m);
    for (e, entry) in scenario.estimators.iter().enumerate() {
        for (c, crit) in Criterion::ALL.iter().enumerate() {
            rows.push(BenchmarkRow {
                scenario: scenario.name.clone(),
                estimator: entry.label(),
                criterion: *crit,
                aggregate: aggregate(&values[e][c]),
                replications: scenario.replications,
                seed: scenario.seed,
            });
        }
    }
    Ok(BenchmarkResult { rows, failures })
}
