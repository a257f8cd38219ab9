//! Dense linear-algebra helpers shared by the model, estimator and metric code.
//!
//! The spectral radius is computed block-wise over the strongly connected
//! components of the sparsity graph of the matrix. Permuting a matrix into
//! block-triangular form leaves its spectrum equal to the union of the
//! spectra of the diagonal blocks, so structurally nilpotent parts (chains,
//! strictly triangular pieces) contribute an exact zero instead of the
//! `eps^(1/k)` noise a dense eigensolver returns for a Jordan block.

use nalgebra::{DMatrix, Schur};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::error::{Result, VarError};

pub const DEFAULT_RADIUS_TOL: f64 = 1e-10;
pub const DEFAULT_RADIUS_MAX_ITER: usize = 10_000;

/// Largest entry in absolute value.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Spectral radius of a square real matrix.
///
/// `tol` is the deflation threshold of the Hessenberg QR iteration and
/// `max_iter` caps the total number of QR sweeps per irreducible block.
pub fn spectral_radius(m: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<f64> {
    if !m.is_square() {
        return Err(VarError::Dimension(format!(
            "spectral radius of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(VarError::InvalidArgument(
            "spectral radius of a matrix with non-finite entries".into(),
        ));
    }
    let n = m.nrows();
    let mut graph = DiGraph::<usize, ()>::with_capacity(n, n);
    let nodes: Vec<_> = (0..n).map(|i| graph.add_node(i)).collect();
    for i in 0..n {
        for j in 0..n {
            if i != j && m[(i, j)] != 0.0 {
                graph.add_edge(nodes[i], nodes[j], ());
            }
        }
    }

    let mut radius = 0.0_f64;
    for component in tarjan_scc(&graph) {
        let idx: Vec<usize> = component.iter().map(|node| graph[*node]).collect();
        let block_radius = if idx.len() == 1 {
            m[(idx[0], idx[0])].abs()
        } else {
            let k = idx.len();
            let block = DMatrix::from_fn(k, k, |r, c| m[(idx[r], idx[c])]);
            block_radius_shifted(&block, tol, max_iter).ok_or(VarError::NotConverged {
                what: "Schur iteration for the spectral radius",
                iterations: max_iter,
                last: Some(vec![radius]),
            })?
        };
        radius = radius.max(block_radius);
    }
    Ok(radius)
}

// Francis QR can cycle on spectra symmetric about the origin; a diagonal
// shift breaks the symmetry and moves every eigenvalue by the same amount.
fn block_radius_shifted(block: &DMatrix<f64>, tol: f64, max_iter: usize) -> Option<f64> {
    let scale = max_abs(block).max(f64::MIN_POSITIVE);
    [0.0, 0.318_309_886, -0.271_828_183, 0.577_215_665]
        .iter()
        .find_map(|&f| {
            let sigma = f * scale;
            let shifted = block + DMatrix::identity(block.nrows(), block.ncols()) * sigma;
            Schur::try_new(shifted, tol, max_iter).map(|schur| {
                schur
                    .complex_eigenvalues()
                    .iter()
                    .fold(0.0_f64, |acc, z| acc.max((z - sigma).norm()))
            })
        })
}

/// Solves `X = A X A^T + Q` for a stable `A` by the doubling iteration
/// `X_{k+1} = X_k + M_k X_k M_k^T`, `M_{k+1} = M_k^2`, starting at `X_0 = Q`,
/// `M_0 = A`.
///
/// Iterates until the increment is at the rounding level of the iterate and
/// then requires `max |X - A X A^T - Q| <= tol * max(1, max |X|)`. The caller
/// is responsible for checking stability; on an unstable input the iteration
/// diverges and a convergence error is returned.
pub fn discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    const MAX_DOUBLINGS: usize = 64;
    if !a.is_square() || q.shape() != a.shape() {
        return Err(VarError::Dimension(format!(
            "Lyapunov equation with A {:?} and Q {:?}",
            a.shape(),
            q.shape()
        )));
    }
    let mut x = q.clone();
    let mut m = a.clone();
    for _ in 0..MAX_DOUBLINGS {
        let increment = &m * &x * m.transpose();
        x += &increment;
        let size = max_abs(&increment);
        if !size.is_finite() {
            break;
        }
        if size <= f64::EPSILON * max_abs(&x) {
            let x = symmetrize(x);
            let residual = lyapunov_residual(a, &x, q);
            if residual <= tol * max_abs(&x).max(1.0) {
                return Ok(x);
            }
            return Err(VarError::NotConverged {
                what: "Lyapunov doubling (residual check)",
                iterations: MAX_DOUBLINGS,
                last: Some(vec![residual]),
            });
        }
        m = &m * &m;
    }
    Err(VarError::NotConverged {
        what: "Lyapunov doubling",
        iterations: MAX_DOUBLINGS,
        last: None,
    })
}

/// `(M + M^T) / 2`.
pub fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Residual `max |X - A X A^T - Q|` of a discrete Lyapunov solution.
pub fn lyapunov_residual(a: &DMatrix<f64>, x: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    max_abs(&(x - a * x * a.transpose() - q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_radius() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, -0.25]));
        assert_eq!(spectral_radius(&m, 1e-10, 100).unwrap(), 0.5);
    }

    #[test]
    fn symmetric_spectrum_block_converges() {
        // plain Francis iteration stalls on this companion block
        let m = DMatrix::from_column_slice(
            4,
            4,
            &[
                0.0, -0.2833625948412723, 0.0, -0.5962449556040309, 0.0, 0.0, 1.0, 0.0, 0.0,
                -0.49478303250567285, 0.0, 0.994330270169354, 1.0, 0.0, 0.0, 0.0,
            ],
        );
        let r = spectral_radius(&m, DEFAULT_RADIUS_TOL, DEFAULT_RADIUS_MAX_ITER).unwrap();
        // Gelfand: ||M^k||^(1/k) with k = 2^12 by normalized squaring
        let mut p = m.clone();
        let mut log_scale = 0.0;
        for _ in 0..12 {
            p = &p * &p;
            let s = max_abs(&p);
            p /= s;
            log_scale = 2.0 * log_scale + s.ln();
        }
        let _ = p;
        let gelfand = (log_scale / 4096.0).exp();
        assert!((r - gelfand).abs() < 1e-2, "{r} vs {gelfand}");
    }

    #[test]
    fn zero_matrix_radius() {
        let m = DMatrix::<f64>::zeros(4, 4);
        assert_eq!(spectral_radius(&m, 1e-10, 100).unwrap(), 0.0);
    }

    #[test]
    fn ar2_companion_radius_matches_quadratic_roots() {
        // z^2 - 0.5 z - 0.25 = 0
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.25, 1.0, 0.0]);
        let disc: f64 = 0.25 + 1.0;
        let oracle = (0.5 + disc.sqrt()) / 2.0;
        let r = spectral_radius(&m, 1e-12, 1000).unwrap();
        assert!((r - oracle).abs() < 1e-12);
        assert!((oracle - (1.0 + 5f64.sqrt()) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn nilpotent_chain_is_exactly_zero() {
        let mut m = DMatrix::<f64>::zeros(10, 10);
        for i in 0..9 {
            m[(i, i + 1)] = 3.0;
        }
        assert_eq!(spectral_radius(&m, 1e-10, 100).unwrap(), 0.0);
    }

    #[test]
    fn rotation_block_radius() {
        let (c, s) = (0.3_f64.cos() * 0.9, 0.3_f64.sin() * 0.9);
        let m = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let r = spectral_radius(&m, 1e-12, 1000).unwrap();
        assert!((r - 0.9).abs() < 1e-12);
    }

    #[test]
    fn non_square_is_rejected() {
        let m = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(
            spectral_radius(&m, 1e-10, 10),
            Err(VarError::Dimension(_))
        ));
    }

    #[test]
    fn scalar_lyapunov() {
        let a = DMatrix::from_element(1, 1, 0.5);
        let q = DMatrix::from_element(1, 1, 1.0);
        let x = discrete_lyapunov(&a, &q, 1e-10).unwrap();
        assert!((x[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
    }
}
