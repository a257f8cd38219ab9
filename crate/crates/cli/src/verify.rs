//! Oracle and property checks behind the `verify` command.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use sparsevar::estimators::dantzig::{dantzig, dantzig_residual};
use sparsevar::estimators::lasso::{kkt_violation, lambda_max_row, lasso_row, lasso_vec, vec_kkt_violation, Moments};
use sparsevar::estimators::lp::{lp_solve, LpProblem, DEFAULT_MAX_PIVOTS, DEFAULT_TOL};
use sparsevar::linalg::lyapunov_residual;
use sparsevar::metrics::{autocov_bound_check, inverse_spectral_bound_check, NormKind};
use sparsevar::model::{build_design, companion, simulate, VarModel};
use sparsevar::simlab::random_sparse_varp;
use sparsevar::spectral::{
    autocov, fourier_frequencies, inverse_spectral_density, spectral_density, stacked_autocov0, LYAPUNOV_TOL,
};
use sparsevar::thresholding::{bound_class, theorem1_bound, thresholded_companion_error, ThresholdRule};

/// Pass/fail tally of one check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: usize,
    pub failed: usize,
    /// Worst observed value or first failure.
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            passed: 0,
            failed: 0,
            detail: String::new(),
        }
    }

    fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if ok {
            self.passed += 1;
        } else {
            if self.failed == 0 {
                self.detail = format!("first failure: {}", what());
            }
            self.failed += 1;
        }
    }

    fn note(&mut self, text: String) {
        if self.failed == 0 {
            self.detail = text;
        }
    }

    pub fn ok(&self) -> bool {
        self.failed == 0 && self.passed > 0
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {} passed, {} failed{}",
            if self.ok() { "PASS" } else { "FAIL" },
            self.name,
            self.passed,
            self.failed,
            if self.detail.is_empty() { String::new() } else { format!(" ({})", self.detail) }
        )
    }
}

/// Instance counts of the suite.
#[derive(Debug, Clone, Copy)]
pub struct Sizes {
    pub models: usize,
    pub lasso_instances: usize,
    pub lps: usize,
    pub bound_sets: usize,
    pub perturbations: usize,
    pub bound_pairs: usize,
}

impl Sizes {
    pub fn quick() -> Self {
        Self {
            models: 20,
            lasso_instances: 20,
            lps: 100,
            bound_sets: 10,
            perturbations: 5,
            bound_pairs: 10,
        }
    }

    pub fn full() -> Self {
        Self {
            models: 100,
            lasso_instances: 100,
            lps: 500,
            bound_sets: 50,
            perturbations: 20,
            bound_pairs: 50,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let l = DMatrix::from_fn(d, d, |_, _| normal(rng));
    let m = &l * l.transpose() / d as f64 + DMatrix::identity(d, d) * 0.5;
    (&m + m.transpose()) * 0.5
}

/// Random stable model with `d <= max_d`, `p <= max_p`, radius at most `max_rho`.
pub fn random_model(seed: u64, max_d: usize, max_p: usize, max_rho: f64) -> VarModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=max_d);
    let p = rng.random_range(1..=max_p);
    let s = rng.random_range(1..=d);
    let rho = rng.random_range(0.05..max_rho);
    let sigma = random_spd(d, &mut rng);
    let mut draw = seed.wrapping_mul(31).wrapping_add(7);
    loop {
        if let Ok(coeffs) = random_sparse_varp(d, s, rho, p, draw) {
            return VarModel::new(coeffs, sigma).expect("generated model is valid");
        }
        draw = draw.wrapping_add(1);
    }
}

fn model_set(n: usize) -> Vec<VarModel> {
    (0..n as u64).map(|i| random_model(1000 + i, 20, 4, 0.95)).collect()
}

/// Stationary covariance against the Lyapunov equation and AR(1) closed forms.
pub fn check_lyapunov(sizes: &Sizes) -> CheckOutcome {
    let mut out = CheckOutcome::new("lyapunov");
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for model in model_set(sizes.models) {
        let comp = companion(model.coeffs());
        let su = &comp.embed * model.sigma() * comp.embed.transpose();
        match stacked_autocov0(model.coeffs(), model.sigma(), LYAPUNOV_TOL) {
            Ok(g) => {
                let r = lyapunov_residual(&comp.a_stack, &g, &su);
                worst = worst.max(r);
                out.record(r <= 1e-8, || format!("residual {r:e} at d={} p={}", model.d(), model.p()));
            }
            Err(e) => out.record(false, || e.to_string()),
        }
    }
    for k in 0..19 {
        let a = -0.9 + 0.1 * k as f64;
        let s2 = 0.5 + 0.25 * k as f64;
        let model = VarModel::new(vec![DMatrix::from_element(1, 1, a)], DMatrix::from_element(1, 1, s2))
            .expect("scalar model");
        for h in [-3_i64, -1, 0, 1, 2, 5] {
            let exact = s2 * a.powi(h.unsigned_abs() as i32) / (1.0 - a * a);
            let got = autocov(&model, h, LYAPUNOV_TOL).map(|g| g[(0, 0)]).unwrap_or(f64::NAN);
            out.record((got - exact).abs() <= 1e-10, || format!("AR(1) a={a} h={h}: {got} vs {exact}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    out.record(secs < 10.0, || format!("took {secs:.1}s"));
    out.note(format!("max residual {worst:.2e}, {secs:.2}s"));
    out
}

/// Riemann sum of the spectral density against `Gamma(0)` and `f f^-1 = I`.
pub fn check_spectral(sizes: &Sizes) -> CheckOutcome {
    let mut out = CheckOutcome::new("spectral-identity");
    let freqs = fourier_frequencies(4096);
    let probe = fourier_frequencies(32);
    let mut worst_sum = 0.0_f64;
    let mut worst_inv = 0.0_f64;
    for model in model_set(sizes.models) {
        let d = model.d();
        let g0 = match autocov(&model, 0, LYAPUNOV_TOL) {
            Ok(g) => g,
            Err(e) => {
                out.record(false, || e.to_string());
                continue;
            }
        };
        let mut acc = DMatrix::zeros(d, d);
        let mut ok = true;
        for &w in &freqs {
            match spectral_density(model.coeffs(), model.sigma(), w) {
                Ok(f) => acc += f.map(|z| z.re),
                Err(_) => ok = false,
            }
        }
        let sum_err = (acc * (2.0 * std::f64::consts::PI / freqs.len() as f64) - &g0).amax();
        worst_sum = worst_sum.max(sum_err);
        out.record(ok && sum_err <= 1e-4, || format!("Riemann sum off by {sum_err:e}"));

        let sigma_inv = model.sigma().clone().try_inverse().expect("SPD");
        let mut inv_err = 0.0_f64;
        for &w in &probe {
            let f = spectral_density(model.coeffs(), model.sigma(), w);
            let fi = inverse_spectral_density(model.coeffs(), &sigma_inv, w);
            match (f, fi) {
                (Ok(f), Ok(fi)) => {
                    let prod = f * fi - DMatrix::identity(d, d).map(|v: f64| nalgebra::Complex::new(v, 0.0));
                    inv_err = inv_err.max(prod.iter().fold(0.0, |a, z| a.max(z.norm())));
                }
                _ => inv_err = f64::INFINITY,
            }
        }
        worst_inv = worst_inv.max(inv_err);
        out.record(inv_err <= 1e-8, || format!("f f^-1 off by {inv_err:e}"));
    }
    out.note(format!("max sum error {worst_sum:.2e}, max inverse error {worst_inv:.2e}"));
    out
}

fn random_regression(seed: u64, n: usize, k: usize, m: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, k, |_, _| normal(&mut rng));
    let b = DMatrix::from_fn(k, m, |_, _| if rng.random::<f64>() < 0.3 { normal(&mut rng) } else { 0.0 });
    let noise = DMatrix::from_fn(n, m, |_, _| 0.5 * normal(&mut rng));
    let y = &x * &b + noise;
    (x, y, b)
}

/// KKT certificates of Lasso fits, Dantzig feasibility and dominance, and
/// zero-penalty fits against direct solves.
pub fn check_certificates(sizes: &Sizes) -> CheckOutcome {
    let mut out = CheckOutcome::new("estimator-certificates");
    let mut worst_kkt = 0.0_f64;
    for i in 0..sizes.lasso_instances as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + i);
        // half the instances are VAR designs, half i.i.d. regressions
        let moments = if i % 2 == 0 {
            let model = random_model(7000 + i, 6, 2, 0.9);
            let series = simulate(&model, 80, 100, i).expect("simulation");
            Moments::from_design(&build_design(&series, model.p()).expect("design"))
        } else {
            let k = rng.random_range(2..=30);
            let (x, y, _) = random_regression(i, 40, k, 3);
            Moments::from_matrices(&x, &y)
        };
        let dp = moments.dp();
        for j in 0..moments.d() {
            let w: Vec<f64> = (0..dp).map(|_| rng.random_range(0.2..2.0)).collect();
            let lmax = lambda_max_row(&moments, j, &w);
            for frac in [0.5, 0.1, 0.01] {
                let lambda = lmax * frac;
                match lasso_row(&moments, j, lambda, &w, None, 1e-7, 100_000) {
                    Ok(fit) => {
                        let v = kkt_violation(&moments, j, lambda, &w, &fit.beta);
                        worst_kkt = worst_kkt.max(v);
                        out.record(v <= 1e-6, || format!("row KKT violation {v:e}"));
                    }
                    Err(e) => out.record(false, || e.to_string()),
                }
            }
        }
        let d = moments.d();
        let omega = random_spd(d, &mut rng);
        let wm = DMatrix::from_fn(dp, d, |_, _| rng.random_range(0.2..2.0));
        let lmax = sparsevar::estimators::lasso::lambda_max_vec(&moments, &omega, &wm);
        let lambda = lmax * 0.1;
        match lasso_vec(&moments, &omega, lambda, &wm, None, 1e-7, 100_000) {
            Ok(fit) => {
                let v = vec_kkt_violation(&moments, &omega, lambda, &wm, &fit.b);
                worst_kkt = worst_kkt.max(v);
                out.record(v <= 1e-6, || format!("vector KKT violation {v:e}"));
            }
            Err(e) => out.record(false, || e.to_string()),
        }
    }

    for i in 0..sizes.lasso_instances as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + i);
        let k = rng.random_range(2..=12);
        let (x, y, b_true) = random_regression(20_000 + i, 60, k, 1);
        let m = Moments::from_matrices(&x, &y);
        let c = m.cross.column(0).into_owned();
        let truth = b_true.column(0).into_owned();
        let ones = vec![1.0; k];
        let true_res = dantzig_residual(&m.gram, &c, &truth);
        for lambda in [true_res * 1.01, true_res * 2.0, c.amax() * 0.3] {
            match dantzig(&m.gram, &c, lambda, &ones) {
                Ok(beta) => {
                    let res = dantzig_residual(&m.gram, &c, &beta);
                    out.record(res <= lambda + 1e-9, || format!("Dantzig residual {res} > {lambda}"));
                    if true_res <= lambda {
                        let l1 = beta.lp_norm(1);
                        let t1 = truth.lp_norm(1);
                        out.record(l1 <= t1 + 1e-9, || format!("l1 norm {l1} exceeds the truth's {t1}"));
                    }
                }
                Err(e) => out.record(false, || e.to_string()),
            }
        }
    }

    for i in 0..sizes.lasso_instances as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(30_000 + i);
        let k = rng.random_range(1..=5);
        let (x, y, _) = random_regression(40_000 + i, 50, k, 1);
        let m = Moments::from_matrices(&x, &y);
        let direct = match m.gram.clone().lu().solve(&m.cross) {
            Some(v) => v.column(0).into_owned(),
            None => continue,
        };
        let ones = vec![1.0; k];
        match lasso_row(&m, 0, 0.0, &ones, None, 1e-12, 100_000) {
            Ok(fit) => {
                let e = (&fit.beta - &direct).amax();
                out.record(e <= 1e-6, || format!("Lasso at zero penalty off by {e:e}"));
            }
            Err(e) => out.record(false, || e.to_string()),
        }
        match dantzig(&m.gram, &m.cross.column(0).into_owned(), 0.0, &ones) {
            Ok(beta) => {
                let e = (&beta - &direct).amax();
                out.record(e <= 1e-6, || format!("Dantzig at zero penalty off by {e:e}"));
            }
            Err(e) => out.record(false, || e.to_string()),
        }
    }
    out.note(format!("max KKT violation {worst_kkt:.2e}"));
    out
}

/// Optimum of `min c^T x s.t. G x <= g, x >= 0` by enumerating every
/// basic solution. `None` when no vertex is feasible.
pub fn vertex_enumeration(problem: &LpProblem) -> Option<f64> {
    let n = problem.n_vars();
    let m = problem.n_constraints();
    // all inequalities as rows of [A | b]: G x <= g and -x <= 0
    let total = m + n;
    let row = |r: usize| -> (Vec<f64>, f64) {
        if r < m {
            ((0..n).map(|c| problem.constraints[(r, c)]).collect(), problem.bounds[r])
        } else {
            let mut v = vec![0.0; n];
            v[r - m] = -1.0;
            (v, 0.0)
        }
    };
    let mut best: Option<f64> = None;
    let mut pick: Vec<usize> = (0..n).collect();
    loop {
        let mut a = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        for (k, &r) in pick.iter().enumerate() {
            let (coef, rhs) = row(r);
            for c in 0..n {
                a[(k, c)] = coef[c];
            }
            b[k] = rhs;
        }
        let lu = a.lu();
        if lu.determinant().abs() > 1e-12 {
            if let Some(x) = lu.solve(&b) {
                if problem.violation(&x) <= 1e-9 {
                    let obj = problem.objective.dot(&x);
                    best = Some(best.map_or(obj, |v: f64| v.min(obj)));
                }
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] < total - n + i {
                pick[i] += 1;
                for k in i + 1..n {
                    pick[k] = pick[k - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Random feasible, bounded LP with at most 8 variables.
pub fn random_lp(seed: u64) -> LpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=8);
    let m = rng.random_range(1..=6);
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(0.0..2.0));
    let mut g = DMatrix::from_fn(m + 1, n, |_, _| {
        let v: f64 = rng.random_range(-3.0..3.0);
        (v * 4.0).round() / 4.0
    });
    // the last row bounds the feasible set
    for c in 0..n {
        g[(m, c)] = 1.0;
    }
    let slack = DVector::from_fn(m + 1, |_, _| rng.random_range(0.0..1.5));
    let bounds = &g * &x0 + slack;
    let objective = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    LpProblem::new(objective, g, bounds).expect("finite LP data")
}

/// Simplex against vertex enumeration, plus the diagonal Dantzig case.
pub fn check_lp(sizes: &Sizes) -> CheckOutcome {
    let mut out = CheckOutcome::new("lp-oracle");
    let mut worst = 0.0_f64;
    for i in 0..sizes.lps as u64 {
        let lp = random_lp(60_000 + i);
        let oracle = vertex_enumeration(&lp);
        match (lp_solve(&lp, DEFAULT_TOL, DEFAULT_MAX_PIVOTS), oracle) {
            (Ok(sol), Some(best)) => {
                let e = (sol.objective - best).abs();
                worst = worst.max(e);
                out.record(e <= 1e-8 && lp.violation(&sol.x) <= 1e-9, || {
                    format!("LP {i}: simplex {} vs vertices {best}", sol.objective)
                });
            }
            (r, o) => out.record(false, || format!("LP {i}: simplex {:?}, vertices {o:?}", r.map(|s| s.objective))),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..sizes.lps / 5 {
        let k = rng.random_range(1..=8);
        let b = DVector::from_fn(k, |_, _| normal(&mut rng));
        let lambda = rng.random_range(0.0..1.5);
        let beta = dantzig(&DMatrix::identity(k, k), &b, lambda, &vec![1.0; k]);
        let soft = b.map(|z| ThresholdRule::Soft.apply(lambda, z));
        out.record(beta.as_ref().is_ok_and(|v| *v == soft), || format!("identity Gram at lambda {lambda}"));
    }
    out.note(format!("max objective gap {worst:.2e}"));
    out
}

/// Thresholding bound over class members and bounded perturbations.
pub fn check_threshold_bound(sizes: &Sizes) -> CheckOutcome {
    let mut out = CheckOutcome::new("thresholding-bound");
    let mut tightest = 0.0_f64;
    for i in 0..sizes.bound_sets as u64 {
        let model = random_model(80_000 + i, 12, 3, 0.9);
        let coeffs = model.coeffs();
        let mut rng = ChaCha8Rng::seed_from_u64(90_000 + i);
        for q in [0.0, 0.5] {
            let class = bound_class(coeffs, q);
            for _ in 0..sizes.perturbations {
                let t: f64 = 10f64.powf(rng.random_range(-3.0..-0.5));
                let est: Vec<DMatrix<f64>> = coeffs
                    .iter()
                    .map(|a| a.map(|v| v + rng.random_range(-t..=t)))
                    .collect();
                for rule in [ThresholdRule::Soft, ThresholdRule::Adaptive { nu: 4.0 }] {
                    let c = rule.condition_constant().expect("conforming rule");
                    let bound = theorem1_bound(&class, c, t).expect("positive t");
                    match thresholded_companion_error(coeffs, &est, rule, t) {
                        Ok((e1, einf)) => {
                            tightest = tightest.max(e1.max(einf) / bound);
                            out.record(e1 <= bound + 1e-9 && einf <= bound + 1e-9, || {
                                format!("{} q={q}: errors ({e1}, {einf}) vs bound {bound}", rule.name())
                            });
                        }
                        Err(e) => out.record(false, || e.to_string()),
                    }
                }
            }
        }
    }
    out.note(format!("largest error/bound ratio {tightest:.3}"));
    out
}

/// Autocovariance and inverse spectral density bounds on perturbation pairs.
pub fn check_error_bounds(sizes: &Sizes) -> CheckOutcome {
    let mut out = CheckOutcome::new("error-bounds");
    let mut tightest = 0.0_f64;
    let mut pairs = 0;
    let mut k = 0u64;
    while pairs < sizes.bound_pairs {
        k += 1;
        let model = random_model(100_000 + k, 6, 3, 0.8);
        let d = model.d();
        let mut rng = ChaCha8Rng::seed_from_u64(110_000 + k);
        let eps: f64 = 10f64.powf(rng.random_range(-3.0..-1.0));
        let est: Vec<DMatrix<f64>> = model
            .coeffs()
            .iter()
            .map(|a| a.map(|v| v + eps * normal(&mut rng)))
            .collect();
        let e = DMatrix::from_fn(d, d, |_, _| eps * normal(&mut rng));
        let sigma_hat = model.sigma() + (&e + e.transpose()) * 0.5;
        let est_model = match VarModel::new(est.clone(), sigma_hat.clone()) {
            Ok(m) if m.is_stable().unwrap_or(false) && nalgebra::Cholesky::new(sigma_hat.clone()).is_some() => m,
            _ => continue,
        };
        pairs += 1;
        for norm in [NormKind::One, NormKind::Inf] {
            for h in [0usize, 1, 3] {
                match autocov_bound_check(&model, est_model.coeffs(), est_model.sigma(), h, norm) {
                    Ok(c) => {
                        tightest = tightest.max(c.lhs / c.rhs.max(f64::MIN_POSITIVE));
                        out.record(c.holds(1e-9), || format!("autocovariance h={h}: {} > {}", c.lhs, c.rhs));
                    }
                    Err(e) => out.record(false, || e.to_string()),
                }
            }
        }
        let sigma_hat_inv = sigma_hat.try_inverse().expect("positive definite");
        match inverse_spectral_bound_check(&model, &est, &sigma_hat_inv, 64) {
            Ok(c) => {
                tightest = tightest.max(c.lhs / c.rhs.max(f64::MIN_POSITIVE));
                out.record(c.holds(1e-9), || format!("inverse spectral: {} > {}", c.lhs, c.rhs));
            }
            Err(e) => out.record(false, || e.to_string()),
        }
    }
    out.note(format!("largest lhs/rhs ratio {tightest:.3}"));
    out
}

pub fn run_all(sizes: &Sizes) -> Vec<CheckOutcome> {
    vec![
        check_lyapunov(sizes),
        check_spectral(sizes),
        check_certificates(sizes),
        check_lp(sizes),
        check_threshold_bound(sizes),
        check_error_bounds(sizes),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex_enumeration_small_case() {
        // min -x - y  s.t.  x + 2y <= 4, 3x + y <= 6
        let lp = LpProblem::new(
            DVector::from_vec(vec![-1.0, -1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 1.0]),
            DVector::from_vec(vec![4.0, 6.0]),
        )
        .unwrap();
        assert!((vertex_enumeration(&lp).unwrap() + 2.8).abs() < 1e-12);
    }

    #[test]
    fn random_lps_are_feasible() {
        for s in 0..20 {
            assert!(vertex_enumeration(&random_lp(s)).is_some());
        }
    }
}
