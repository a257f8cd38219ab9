//! Generalized thresholding rules and their entrywise application.

use nalgebra::DMatrix;

use crate::error::{Result, VarError};
use crate::model::{companion, ClassVariant, SparsityClass};

/// Exponent used for adaptive thresholding when none is given.
pub const DEFAULT_NU: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdRule {
    Soft,
    /// `z * max(0, 1 - |lambda / z|^nu)`.
    Adaptive { nu: f64 },
    /// Keeps `z` when `|z| > lambda`. Violates the shrinkage-domination
    /// condition, see [`ThresholdRule::condition_constant`].
    Hard,
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::Adaptive { nu: DEFAULT_NU }
    }
}

impl ThresholdRule {
    pub fn adaptive(nu: f64) -> Result<Self> {
        if !(nu >= 1.0) || !nu.is_finite() {
            return Err(VarError::InvalidArgument(format!(
                "adaptive thresholding needs nu >= 1, got {nu}"
            )));
        }
        Ok(ThresholdRule::Adaptive { nu })
    }

    /// Smallest `c` with `|THR(z)| <= c |y|` whenever `|z - y| <= lambda`.
    ///
    /// Soft thresholding gives 1. For the adaptive rule the ratio
    /// `|THR(z)| / (|z| - lambda)` tends to `nu` as `|z|` decreases to
    /// `lambda`, so the constant is `nu`. Hard thresholding has no finite
    /// constant and returns `None`.
    pub fn condition_constant(&self) -> Option<f64> {
        match *self {
            ThresholdRule::Soft => Some(1.0),
            ThresholdRule::Adaptive { nu } => Some(nu),
            ThresholdRule::Hard => None,
        }
    }

    pub fn is_conforming(&self) -> bool {
        self.condition_constant().is_some()
    }

    pub fn name(&self) -> String {
        match *self {
            ThresholdRule::Soft => "soft".into(),
            ThresholdRule::Adaptive { nu } => format!("adaptive(nu={nu})"),
            ThresholdRule::Hard => "hard".into(),
        }
    }

    pub fn apply(&self, lambda: f64, z: f64) -> f64 {
        threshold_scalar(*self, lambda, z)
    }
}

pub fn threshold_scalar(rule: ThresholdRule, lambda: f64, z: f64) -> f64 {
    match rule {
        ThresholdRule::Soft => z.signum() * (z.abs() - lambda).max(0.0),
        ThresholdRule::Adaptive { nu } => {
            if z == 0.0 || z.abs() <= lambda {
                0.0
            } else {
                z * (1.0 - (lambda / z).abs().powf(nu)).max(0.0)
            }
        }
        ThresholdRule::Hard => {
            if z.abs() > lambda {
                z
            } else {
                0.0
            }
        }
    }
}

pub fn threshold_matrix(rule: ThresholdRule, lambda: f64, m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|z| threshold_scalar(rule, lambda, z))
}

/// Thresholds every entry except the diagonal.
pub fn threshold_offdiag(rule: ThresholdRule, lambda: f64, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i != j {
                out[(i, j)] = threshold_scalar(rule, lambda, m[(i, j)]);
            }
        }
    }
    out
}

/// Which of the three rule conditions a pair violates.
#[derive(Debug, Clone, PartialEq)]
pub enum ConditionFailure {
    /// `|THR(z)| > c |y|` with `|z - y| <= lambda`.
    Domination { z: f64, y: f64, c: f64 },
    /// `THR(z) != 0` with `|z| <= lambda`.
    Support { z: f64 },
    /// `|THR(z) - z| > lambda`.
    Shift { z: f64 },
}

/// Outcome of [`verify_rule_conditions`]: `Ok` or the first counterexample.
pub type ConditionReport = std::result::Result<(), ConditionFailure>;

/// Checks the three rule conditions over all grid points and pairs. Hard
/// thresholding is checked against a nominal `c = 1`.
pub fn verify_rule_conditions(rule: ThresholdRule, lambda: f64, grid: &[f64]) -> ConditionReport {
    const SLACK: f64 = 1e-12;
    let c = rule.condition_constant().unwrap_or(1.0);
    for &z in grid {
        let t = threshold_scalar(rule, lambda, z);
        if z.abs() <= lambda && t != 0.0 {
            return Err(ConditionFailure::Support { z });
        }
        if (t - z).abs() > lambda * (1.0 + SLACK) + SLACK {
            return Err(ConditionFailure::Shift { z });
        }
    }
    for &z in grid {
        let t = threshold_scalar(rule, lambda, z).abs();
        for &y in grid {
            if (z - y).abs() <= lambda && t > c * y.abs() * (1.0 + SLACK) + SLACK {
                return Err(ConditionFailure::Domination { z, y, c });
            }
        }
    }
    Ok(())
}

/// `(4 + c) s t^(1 - q)`: the error bound for thresholding a coefficient
/// estimate whose entrywise error is at most `t`, with threshold level `t`.
pub fn theorem1_bound(cls: &SparsityClass, c: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(VarError::InvalidArgument(format!("t must be positive, got {t}")));
    }
    Ok((4.0 + c) * cls.s * t.powf(1.0 - cls.q))
}

/// Thresholds the coefficient blocks of an estimate and returns the
/// companion-form errors `(||.||_1, ||.||_inf)` against the truth. The
/// shifted-identity part of the companion matrix is left untouched.
pub fn thresholded_companion_error(
    truth: &[DMatrix<f64>],
    estimate: &[DMatrix<f64>],
    rule: ThresholdRule,
    lambda: f64,
) -> Result<(f64, f64)> {
    if truth.len() != estimate.len()
        || truth.iter().zip(estimate).any(|(a, b)| a.shape() != b.shape())
    {
        return Err(VarError::Dimension("truth and estimate differ in shape".into()));
    }
    let thresholded: Vec<_> = estimate
        .iter()
        .map(|a| threshold_matrix(rule, lambda, a))
        .collect();
    let diff = companion(truth).a_stack - companion(&thresholded).a_stack;
    Ok((crate::metrics::norm_one(&diff), crate::metrics::norm_inf(&diff)))
}

/// Class used by the thresholding bound: per-lag column budgets.
pub fn bound_class(coeffs: &[DMatrix<f64>], q: f64) -> SparsityClass {
    crate::model::tightest_class(coeffs, ClassVariant::PerLag, q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn scalar_examples() {
        assert!((threshold_scalar(ThresholdRule::Soft, 0.5, 1.2) - 0.7).abs() < 1e-15);
        assert_eq!(threshold_scalar(ThresholdRule::Soft, 0.5, -0.3), 0.0);
        assert_eq!(threshold_scalar(ThresholdRule::Adaptive { nu: 4.0 }, 1.0, 2.0), 1.875);
        for rule in [ThresholdRule::Soft, ThresholdRule::Adaptive { nu: 4.0 }, ThresholdRule::Hard] {
            for z in [-2.5, -0.1, 0.0, 0.3, 7.0] {
                assert_eq!(threshold_scalar(rule, 0.0, z), z, "{rule:?}");
            }
        }
    }

    #[test]
    fn matrix_examples() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, -3.0, 1.0]);
        let t = threshold_matrix(ThresholdRule::Soft, 1.0, &m);
        assert_eq!(t, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -2.0, 0.0]));
        assert_eq!(
            threshold_matrix(ThresholdRule::Soft, 3.5, &m),
            DMatrix::zeros(2, 2)
        );
        assert_eq!(
            threshold_matrix(ThresholdRule::Hard, 1.0, &DMatrix::zeros(3, 2)),
            DMatrix::zeros(3, 2)
        );
    }

    #[test]
    fn soft_and_adaptive_pass_hard_fails() {
        let g = grid(-5.0, 5.0, 401);
        for lambda in [0.1, 0.5, 1.0, 2.0] {
            assert_eq!(verify_rule_conditions(ThresholdRule::Soft, lambda, &g), Ok(()));
            assert_eq!(
                verify_rule_conditions(ThresholdRule::Adaptive { nu: 4.0 }, lambda, &g),
                Ok(())
            );
        }
        let mut g = grid(-2.0, 2.0, 41);
        g.extend([1.01, 0.02]);
        assert!(matches!(
            verify_rule_conditions(ThresholdRule::Hard, 1.0, &g),
            Err(ConditionFailure::Domination { .. })
        ));
    }

    #[test]
    fn adaptive_constant_is_attained_near_threshold() {
        // With c = 1 the adaptive rule fails next to the threshold level.
        let (lambda, nu) = (1.0, 4.0);
        let z = 1.001;
        let y = z - lambda;
        let t = threshold_scalar(ThresholdRule::Adaptive { nu }, lambda, z);
        assert!(t > y);
        assert!(t <= nu * y);
        assert!(t / y > 0.99 * nu);
    }

    #[test]
    fn bound_arithmetic() {
        let cls = SparsityClass::new(ClassVariant::PerLag, 0.0, 2.0, 1.0, 1).unwrap();
        assert!((theorem1_bound(&cls, 1.0, 0.1).unwrap() - 1.0).abs() < 1e-15);
        let cls = SparsityClass::new(ClassVariant::PerLag, 0.5, 4.0, 1.0, 1).unwrap();
        assert!((theorem1_bound(&cls, 1.0, 0.01).unwrap() - 2.0).abs() < 1e-12);
        assert!(theorem1_bound(&cls, 1.0, 1e-300).unwrap() < 1e-140);
        assert!(theorem1_bound(&cls, 1.0, 0.0).is_err());
    }

    #[test]
    fn offdiag_keeps_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[0.1, 0.05, 0.05, 0.2]);
        let t = threshold_offdiag(ThresholdRule::Soft, 1.0, &m);
        assert_eq!(t, DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.2]));
    }
}
