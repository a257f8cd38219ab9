//! Weighted Dantzig selector on sample moments, solved as a linear program.

use nalgebra::{DMatrix, DVector};

use super::lasso::Moments;
use super::lp::{self, LpProblem};
use crate::error::{Result, VarError};

/// Feasibility slack accepted on returned Dantzig solutions.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

/// `min sum_i w_i |beta_i|  s.t.  ||G beta - b||_max <= lambda`.
///
/// The split `beta = beta+ - beta-` gives `2k` nonnegative variables and
/// the `2k` rows `G beta - b <= lambda`, `b - G beta <= lambda`.
pub fn dantzig(
    gram: &DMatrix<f64>,
    b: &DVector<f64>,
    lambda: f64,
    weights: &[f64],
) -> Result<DVector<f64>> {
    let k = gram.nrows();
    if !gram.is_square() || b.len() != k || weights.len() != k {
        return Err(VarError::Dimension(format!(
            "Dantzig problem with Gram {:?}, {} targets and {} weights",
            gram.shape(),
            b.len(),
            weights.len()
        )));
    }
    if !(lambda >= 0.0) {
        return Err(VarError::InvalidArgument(format!("lambda = {lambda}")));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(VarError::InvalidArgument(
            "penalty weights must be finite and nonnegative".into(),
        ));
    }
    if b.iter().all(|v| v.abs() <= lambda) {
        return Ok(DVector::zeros(k));
    }
    // a diagonal Gram decouples the constraints
    if (0..k).all(|i| gram[(i, i)] > 0.0 && (0..k).all(|l| l == i || gram[(i, l)] == 0.0)) {
        return Ok(DVector::from_fn(k, |i, _| {
            let z = b[i];
            let shrunk = if z > lambda {
                z - lambda
            } else if z < -lambda {
                z + lambda
            } else {
                0.0
            };
            shrunk / gram[(i, i)]
        }));
    }
    let mut objective = DVector::zeros(2 * k);
    for i in 0..k {
        objective[i] = weights[i];
        objective[k + i] = weights[i];
    }
    let mut constraints = DMatrix::zeros(2 * k, 2 * k);
    constraints.view_mut((0, 0), (k, k)).copy_from(gram);
    constraints.view_mut((0, k), (k, k)).copy_from(&(-gram));
    constraints.view_mut((k, 0), (k, k)).copy_from(&(-gram));
    constraints.view_mut((k, k), (k, k)).copy_from(gram);
    let mut bounds = DVector::zeros(2 * k);
    for i in 0..k {
        bounds[i] = b[i] + lambda;
        bounds[k + i] = lambda - b[i];
    }
    let problem = LpProblem::new(objective, constraints, bounds)?;
    let solution = match lp::lp_solve(&problem, lp::DEFAULT_TOL, lp::DEFAULT_MAX_PIVOTS) {
        Ok(s) => s,
        Err(VarError::Infeasible) if lambda > 0.0 => {
            return Err(VarError::Internal(
                "Dantzig program reported infeasible at positive lambda".into(),
            ))
        }
        Err(e) => return Err(e),
    };
    let beta = DVector::from_fn(k, |i, _| solution.x[i] - solution.x[k + i]);
    Ok(beta)
}

/// `||G beta - b||_max`.
pub fn dantzig_residual(gram: &DMatrix<f64>, b: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    (gram * beta - b).amax()
}

/// Row `j` of the VAR Dantzig estimator: `G = X^T X / N`, `b = X^T Y e_j / N`.
pub fn dantzig_row(
    moments: &Moments,
    j: usize,
    lambda: f64,
    weights: &[f64],
) -> Result<DVector<f64>> {
    if j >= moments.d() {
        return Err(VarError::Dimension(format!("row {j} of {}", moments.d())));
    }
    let b = moments.cross.column(j).into_owned();
    dantzig(&moments.gram, &b, lambda, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_gram_is_soft_threshold() {
        let g = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![1.0, 0.2]);
        let beta = dantzig(&g, &b, 0.3, &[1.0, 1.0]).unwrap();
        assert!((beta[0] - 0.7).abs() < 1e-15);
        assert_eq!(beta[1], 0.0);
    }

    #[test]
    fn zero_at_lambda_max() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let b = DVector::from_vec(vec![0.4, -0.9]);
        assert_eq!(dantzig(&g, &b, 0.9, &[1.0, 1.0]).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn zero_lambda_solves_the_system() {
        let g = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.5, -0.3, 0.1, -0.3, 1.0]);
        let b = DVector::from_vec(vec![1.0, -0.5, 0.25]);
        let beta = dantzig(&g, &b, 0.0, &[1.0; 3]).unwrap();
        let direct = g.clone().lu().solve(&b).unwrap();
        assert!((beta - direct).amax() < 1e-8);
    }

    #[test]
    fn solution_is_feasible_and_sparse() {
        let g = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, 0.2, 0.4, 1.0, 0.4, 0.2, 0.4, 1.0]);
        let b = DVector::from_vec(vec![0.9, 0.5, 0.1]);
        let beta = dantzig(&g, &b, 0.1, &[1.0; 3]).unwrap();
        assert!(dantzig_residual(&g, &b, &beta) <= 0.1 + FEASIBILITY_SLACK);
        assert!(beta.iter().filter(|v| **v != 0.0).count() < 3);
    }
}
