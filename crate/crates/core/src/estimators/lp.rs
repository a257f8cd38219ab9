//! Dense two-phase primal simplex for `min c^T x  s.t.  G x <= g, x >= 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, VarError};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_PIVOTS: usize = 50_000;
/// Consecutive degenerate pivots after which pricing switches to Bland's rule.
const DEGENERATE_SWITCH: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: DVector<f64>,
    pub constraints: DMatrix<f64>,
    pub bounds: DVector<f64>,
}

impl LpProblem {
    pub fn new(objective: DVector<f64>, constraints: DMatrix<f64>, bounds: DVector<f64>) -> Result<Self> {
        if constraints.ncols() != objective.len() || constraints.nrows() != bounds.len() {
            return Err(VarError::Dimension(format!(
                "LP with {} costs, constraint matrix {:?} and {} bounds",
                objective.len(),
                constraints.shape(),
                bounds.len()
            )));
        }
        let finite = objective.iter().chain(constraints.iter()).chain(bounds.iter());
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(VarError::InvalidArgument("LP data must be finite".into()));
        }
        Ok(Self {
            objective,
            constraints,
            bounds,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.bounds.len()
    }

    /// Largest amount by which `x` violates `G x <= g` or `x >= 0`.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let slack = &self.constraints * x - &self.bounds;
        let rows = slack.iter().fold(0.0_f64, |acc, v| acc.max(*v));
        let signs = x.iter().fold(0.0_f64, |acc, v| acc.max(-v));
        rows.max(signs)
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub pivots: usize,
}

/// Tableau over `[x | slacks | artificials | rhs]`.
struct Tableau {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.data[r * (self.cols + 1) + self.cols]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let p = self.data[pr * w + pc];
        for c in 0..w {
            self.data[pr * w + c] /= p;
        }
        self.data[pr * w + pc] = 1.0;
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.data[r * w + pc];
            if f != 0.0 {
                for c in 0..w {
                    let v = self.data[pr * w + c];
                    if v != 0.0 {
                        self.data[r * w + c] -= f * v;
                    }
                }
                self.data[r * w + pc] = 0.0;
            }
        }
        self.basis[pr] = pc;
    }

    /// Reduced costs of `cost` with respect to the current basis.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for (c, dc) in d.iter_mut().enumerate() {
                    *dc -= cb * self.at(r, c);
                }
            }
        }
        d
    }

    /// Minimizes `cost` over columns with `allowed[c]`; returns the pivot count.
    fn optimize(
        &mut self,
        cost: &[f64],
        allowed: &[bool],
        tol: f64,
        max_pivots: usize,
        pivots: &mut usize,
    ) -> Result<()> {
        let mut degenerate_run = 0usize;
        let mut reduced = self.reduced_costs(cost);
        loop {
            let bland = degenerate_run >= DEGENERATE_SWITCH;
            let mut entering = None;
            let mut best = -tol;
            for c in 0..self.cols {
                if !allowed[c] || reduced[c] >= -tol {
                    continue;
                }
                if bland {
                    entering = Some(c);
                    break;
                }
                if reduced[c] < best {
                    best = reduced[c];
                    entering = Some(c);
                }
            }
            let Some(pc) = entering else {
                return Ok(());
            };

            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > tol {
                    let ratio = self.rhs(r).max(0.0) / a;
                    leaving = match leaving {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            let better = ratio < lratio - tol * (1.0 + lratio.abs())
                                || (ratio <= lratio + tol * (1.0 + lratio.abs())
                                    && self.basis[r] < self.basis[lr]);
                            if better {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((pr, ratio)) = leaving else {
                return Err(VarError::Unbounded);
            };
            if *pivots >= max_pivots {
                return Err(VarError::NotConverged {
                    what: "simplex",
                    iterations: *pivots,
                    last: None,
                });
            }
            degenerate_run = if ratio <= tol { degenerate_run + 1 } else { 0 };
            self.pivot(pr, pc);
            *pivots += 1;
            let f = reduced[pc];
            for (c, rc) in reduced.iter_mut().enumerate() {
                *rc -= f * self.at(pr, c);
            }
            reduced[pc] = 0.0;
            if *pivots % 100 == 0 {
                reduced = self.reduced_costs(cost);
            }
        }
    }
}

/// Solves the LP by a two-phase primal simplex. Pricing uses the most
/// negative reduced cost and switches to Bland's rule after a run of
/// degenerate pivots; ratio-test ties go to the smallest basic index. The
/// final basis is re-solved by LU to shed pivoting error.
pub fn lp_solve(problem: &LpProblem, tol: f64, max_pivots: usize) -> Result<LpSolution> {
    let m = problem.n_constraints();
    let n = problem.n_vars();
    let neg_rows: Vec<usize> = (0..m).filter(|&r| problem.bounds[r] < 0.0).collect();
    let n_art = neg_rows.len();
    let cols = n + m + n_art;
    let w = cols + 1;
    let mut data = vec![0.0; m * w];
    let mut basis = vec![0; m];
    let mut art_index = 0;
    for r in 0..m {
        let sign = if problem.bounds[r] < 0.0 { -1.0 } else { 1.0 };
        for c in 0..n {
            data[r * w + c] = sign * problem.constraints[(r, c)];
        }
        data[r * w + n + r] = sign;
        data[r * w + cols] = sign * problem.bounds[r];
        if sign < 0.0 {
            let a = n + m + art_index;
            data[r * w + a] = 1.0;
            basis[r] = a;
            art_index += 1;
        } else {
            basis[r] = n + r;
        }
    }
    let mut tab = Tableau {
        rows: m,
        cols,
        data,
        basis,
    };
    let mut pivots = 0;

    if n_art > 0 {
        let mut cost = vec![0.0; cols];
        for c in cost.iter_mut().skip(n + m) {
            *c = 1.0;
        }
        let allowed = vec![true; cols];
        tab.optimize(&cost, &allowed, tol, max_pivots, &mut pivots)?;
        let scale = problem.bounds.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
        let infeasibility: f64 = (0..m)
            .filter(|&r| tab.basis[r] >= n + m)
            .map(|r| tab.rhs(r))
            .sum();
        if infeasibility > tol * scale * (m as f64).max(1.0) {
            return Err(VarError::Infeasible);
        }
        // drive remaining artificials out of the basis
        for r in 0..m {
            if tab.basis[r] >= n + m {
                let mut best: Option<(usize, f64)> = None;
                for c in 0..n + m {
                    let a = tab.at(r, c).abs();
                    if a > tol && best.is_none_or(|(_, b)| a > b) {
                        best = Some((c, a));
                    }
                }
                if let Some((c, _)) = best {
                    tab.pivot(r, c);
                    pivots += 1;
                }
            }
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(problem.objective.as_slice());
    let mut allowed = vec![true; cols];
    for a in allowed.iter_mut().skip(n + m) {
        *a = false;
    }
    tab.optimize(&cost, &allowed, tol, max_pivots, &mut pivots)?;

    let mut x = DVector::zeros(n);
    for r in 0..m {
        if tab.basis[r] < n {
            x[tab.basis[r]] = tab.rhs(r);
        }
    }
    if let Some(polished) = polish(problem, &tab.basis) {
        if problem.violation(&polished) <= problem.violation(&x).max(tol) {
            x = polished;
        }
    }
    x.iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v = 0.0
        }
    });
    let objective = problem.objective.dot(&x);
    Ok(LpSolution {
        x,
        objective,
        pivots,
    })
}

/// Recomputes the basic solution from the original data with an LU solve.
fn polish(problem: &LpProblem, basis: &[usize]) -> Option<DVector<f64>> {
    let m = problem.n_constraints();
    let n = problem.n_vars();
    if basis.iter().any(|&b| b >= n + m) {
        return None;
    }
    let bmat = DMatrix::from_fn(m, m, |r, k| {
        let c = basis[k];
        if c < n {
            problem.constraints[(r, c)]
        } else if c - n == r {
            1.0
        } else {
            0.0
        }
    });
    let xb = bmat.lu().solve(&problem.bounds)?;
    if xb.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut x = DVector::zeros(n);
    for (k, &c) in basis.iter().enumerate() {
        if c < n {
            x[c] = xb[k];
        }
    }
    Some(x)
}
