//! Penalty grids and information-criterion selection of the penalty level.

use crate::error::{Result, VarError};

pub const DEFAULT_GRID_SIZE: usize = 50;
pub const DEFAULT_LASSO_RATIO: f64 = 0.001;
pub const DEFAULT_DANTZIG_RATIO: f64 = 0.01;
/// Coefficients at or below this magnitude do not count as degrees of freedom.
pub const DF_ZERO_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TuningRule {
    Bic,
    Eric { nu: f64 },
}

impl TuningRule {
    pub fn eric(nu: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(VarError::InvalidArgument(format!("ERIC needs nu > 0, got {nu}")));
        }
        Ok(TuningRule::Eric { nu })
    }

    pub fn name(&self) -> String {
        match *self {
            TuningRule::Bic => "BIC".into(),
            TuningRule::Eric { nu } => format!("ERIC(nu={nu})"),
        }
    }

    /// Score of a fit with residual sum of squares `rss`, `df` nonzero
    /// coefficients, `n_eff` observations and penalty `lambda`.
    pub fn score(&self, rss: f64, df: usize, n_eff: usize, lambda: f64) -> Result<f64> {
        match *self {
            TuningRule::Bic => bic_score(rss, df, n_eff),
            TuningRule::Eric { nu } => eric_score(rss, df, n_eff, lambda, nu),
        }
    }
}

fn check_fit(rss: f64, n_eff: usize) -> Result<()> {
    if !(rss > 0.0) || !rss.is_finite() {
        return Err(VarError::Degenerate(format!("residual sum of squares {rss}")));
    }
    if n_eff == 0 {
        return Err(VarError::InsufficientData { needed: 0, got: 0 });
    }
    Ok(())
}

/// `N log(rss / N) + df log N`.
pub fn bic_score(rss: f64, df: usize, n_eff: usize) -> Result<f64> {
    check_fit(rss, n_eff)?;
    let n = n_eff as f64;
    Ok(n * (rss / n).ln() + df as f64 * n.ln())
}

/// `N log(rss / N) + 2 nu df log(N sigma^2 / lambda)` with `sigma^2 = rss / N`.
pub fn eric_score(rss: f64, df: usize, n_eff: usize, lambda: f64, nu: f64) -> Result<f64> {
    check_fit(rss, n_eff)?;
    if !(lambda > 0.0) {
        return Err(VarError::InvalidArgument(format!(
            "ERIC needs a positive penalty, got {lambda}"
        )));
    }
    let n = n_eff as f64;
    let sigma2 = rss / n;
    let penalty = if df == 0 {
        0.0
    } else {
        2.0 * nu * df as f64 * (n * sigma2 / lambda).ln()
    };
    Ok(n * sigma2.ln() + penalty)
}

/// `size` log-spaced values from `lambda_max` down to `ratio * lambda_max`.
pub fn lambda_grid(lambda_max: f64, size: usize, ratio: f64) -> Result<Vec<f64>> {
    if size < 2 {
        return Err(VarError::InvalidArgument(format!("grid size {size} < 2")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(VarError::InvalidArgument(format!("grid ratio {ratio} outside (0, 1)")));
    }
    if !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return Err(VarError::Degenerate(format!("lambda_max = {lambda_max}")));
    }
    let step = ratio.ln() / (size - 1) as f64;
    Ok((0..size)
        .map(|k| {
            if k == 0 {
                lambda_max
            } else if k == size - 1 {
                lambda_max * ratio
            } else {
                lambda_max * (step * k as f64).exp()
            }
        })
        .collect())
}

/// Number of coefficients with magnitude above [`DF_ZERO_TOL`].
pub fn degrees_of_freedom<'a>(coeffs: impl IntoIterator<Item = &'a f64>) -> usize {
    coeffs.into_iter().filter(|v| v.abs() > DF_ZERO_TOL).count()
}

/// Outcome of a grid search.
#[derive(Debug, Clone)]
pub struct Selection<V> {
    pub lambda: f64,
    pub index: usize,
    pub score: f64,
    pub value: V,
    /// Grid points whose fit failed or could not be scored.
    pub skipped: usize,
}

/// Fits along the (descending) grid with warm starts and returns the point
/// of smallest score. Ties keep the earlier, larger penalty. Fits whose
/// score is undefined (e.g. a zero residual) are skipped.
pub fn select<V, F, S>(grid: &[f64], mut fit: F, mut score: S) -> Result<Selection<V>>
where
    V: Clone,
    F: FnMut(f64, Option<&V>) -> Result<V>,
    S: FnMut(&V, f64) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(VarError::InvalidArgument("empty penalty grid".into()));
    }
    let mut best: Option<Selection<V>> = None;
    let mut warm: Option<V> = None;
    let mut last_err = None;
    let mut skipped = 0;
    for (index, &lambda) in grid.iter().enumerate() {
        let value = match fit(lambda, warm.as_ref()) {
            Ok(v) => v,
            Err(e) => {
                skipped += 1;
                last_err = Some(e);
                continue;
            }
        };
        match score(&value, lambda) {
            Ok(s) if s.is_finite() => {
                if best.as_ref().is_none_or(|b| s < b.score) {
                    best = Some(Selection {
                        lambda,
                        index,
                        score: s,
                        value: value.clone(),
                        skipped: 0,
                    });
                }
            }
            Ok(_) => skipped += 1,
            Err(e) => {
                skipped += 1;
                last_err = Some(e);
            }
        }
        warm = Some(value);
    }
    match best {
        Some(mut b) => {
            b.skipped = skipped;
            Ok(b)
        }
        None => Err(last_err.unwrap_or_else(|| VarError::Degenerate("no scorable fit".into()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bic_examples() {
        let s = bic_score(100.0, 3, 100).unwrap();
        assert!((s - 3.0 * 100f64.ln()).abs() < 1e-12);
        assert!((s - 13.815510557964274).abs() < 1e-12);
        assert!((bic_score(50.0, 0, 100).unwrap() - 100.0 * 0.5f64.ln()).abs() < 1e-12);
        assert!(bic_score(50.0, 3, 100).unwrap() < s);
        assert!(bic_score(0.0, 3, 100).is_err());
    }

    #[test]
    fn eric_examples() {
        let s = eric_score(100.0, 2, 100, 1.0, 1.0).unwrap();
        assert!((s - 4.0 * 100f64.ln()).abs() < 1e-12);
        assert!((s - 18.420680743952367).abs() < 1e-12);
        assert_eq!(
            eric_score(80.0, 0, 100, 0.5, 1.0).unwrap(),
            eric_score(80.0, 0, 100, 3.0, 1.0).unwrap()
        );
        assert!(eric_score(100.0, 2, 100, 0.1, 1.0).unwrap() > s);
        assert!(eric_score(100.0, 2, 100, 0.0, 1.0).is_err());
    }

    #[test]
    fn grid_examples() {
        let g = lambda_grid(1.0, 3, 0.01).unwrap();
        assert_eq!(g[0], 1.0);
        assert!((g[1] - 0.1).abs() < 1e-15);
        assert_eq!(g[2], 0.01);
        let g = lambda_grid(2.5, 50, 0.001).unwrap();
        assert!(g.windows(2).all(|w| w[1] < w[0]));
        assert!(lambda_grid(1.0, 1, 0.1).is_err());
    }

    #[test]
    fn single_point_grid_returns_it() {
        let s = select(&[0.3], |l, _| Ok(l), |_, _| Ok(1.0)).unwrap();
        assert_eq!(s.lambda, 0.3);
    }

    #[test]
    fn ties_prefer_larger_lambda() {
        let grid = [3.0, 2.0, 1.0];
        let s = select(&grid, |l, _| Ok(l), |v, _| Ok(if *v < 2.5 { 1.0 } else { 2.0 })).unwrap();
        assert_eq!(s.lambda, 2.0);
        // affine transformations of the score keep the argmin
        let t = select(&grid, |l, _| Ok(l), |v, _| Ok(if *v < 2.5 { 1.0 } else { 2.0 } * 3.0 + 7.0))
            .unwrap();
        assert_eq!(t.index, s.index);
    }

    #[test]
    fn failures_propagate_when_nothing_fits() {
        let r: Result<Selection<f64>> =
            select(&[1.0, 0.5], |_, _| Err(VarError::Infeasible), |_, _| Ok(0.0));
        assert_eq!(r.unwrap_err(), VarError::Infeasible);
    }
}
