//! Dense two-phase simplex with Bland's anti-cycling rule.
//!
//! Sized for the small equilibrium programs this crate assembles (at most a
//! few hundred variables); determinism matters more than speed here, so
//! pivots follow lowest-index rules throughout and there is no scaling,
//! pricing, or refactorization machinery.

use thiserror::Error;

/// Zero tolerance for pivot eligibility and reduced-cost tests.
pub const PIVOT_TOL: f64 = 1e-10;
/// Phase-1 objective above this is reported as infeasible.
const FEASIBILITY_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;

/// min c.v subject to `G v <= h`, `A v = b`, and sign bounds: variable j is
/// nonnegative unless `free[j]`.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub ineq: Vec<(Vec<f64>, f64)>,
    pub eq: Vec<(Vec<f64>, f64)>,
    pub free: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub variables: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible (phase-1 residual {0:.3e})")]
    Infeasible(f64),
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("malformed linear program: {0}")]
    BadShape(String),
    #[error("pivot limit reached; the program appears to stall")]
    Stalled,
}

impl LinearProgram {
    pub fn num_variables(&self) -> usize {
        self.objective.len()
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.objective.len();
        if self.free.len() != n {
            return Err(LpError::BadShape(format!("{} bounds for {n} variables", self.free.len())));
        }
        for (kind, rows) in [("inequality", &self.ineq), ("equality", &self.eq)] {
            for (idx, (row, rhs)) in rows.iter().enumerate() {
                if row.len() != n {
                    return Err(LpError::BadShape(format!("{kind} row {idx} has {} coefficients", row.len())));
                }
                if row.iter().any(|v| !v.is_finite()) || !rhs.is_finite() {
                    return Err(LpError::BadShape(format!("{kind} row {idx} has a non-finite entry")));
                }
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(LpError::BadShape("objective has a non-finite entry".into()));
        }
        Ok(())
    }
}

/// Deterministic vertex solution of `lp`. Free variables are split into
/// differences of nonnegative parts, inequality rows get slacks, phase 1
/// drives artificials out, and ties are always broken by lowest index.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.check()?;
    let mut t = Tableau::build(lp);
    t.phase_one()?;
    t.phase_two(lp)?;
    Ok(t.extract(lp))
}

struct Tableau {
    /// rows of the constraint matrix, rhs in the last position
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    /// column index of each original variable's nonnegative parts
    var_cols: Vec<(usize, Option<usize>)>,
    n_std: usize,
    /// total columns eligible in phase 2 (std vars + slacks)
    n_allowed: usize,
    n_cols: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Tableau {
        let mut var_cols = Vec::with_capacity(lp.num_variables());
        let mut n_std = 0;
        for &f in &lp.free {
            if f {
                var_cols.push((n_std, Some(n_std + 1)));
                n_std += 2;
            } else {
                var_cols.push((n_std, None));
                n_std += 1;
            }
        }
        let m1 = lp.ineq.len();
        let m = m1 + lp.eq.len();
        let n_allowed = n_std + m1;
        // worst case one artificial per row
        let n_cols = n_allowed + m;

        let mut rows = Vec::with_capacity(m);
        for (r, (row, rhs)) in lp.ineq.iter().chain(lp.eq.iter()).enumerate() {
            let mut full = vec![0.0; n_cols + 1];
            for (j, &coef) in row.iter().enumerate() {
                let (pos, neg) = var_cols[j];
                full[pos] = coef;
                if let Some(neg) = neg {
                    full[neg] = -coef;
                }
            }
            if r < m1 {
                full[n_std + r] = 1.0;
            }
            full[n_cols] = *rhs;
            if *rhs < 0.0 {
                for v in full.iter_mut() {
                    *v = -*v;
                }
            }
            rows.push(full);
        }

        // initial basis: a +1 slack where available, otherwise an artificial
        let mut basis = vec![0usize; m];
        let mut next_art = n_allowed;
        for r in 0..m {
            if r < m1 && rows[r][n_std + r] == 1.0 {
                basis[r] = n_std + r;
            } else {
                rows[r][next_art] = 1.0;
                basis[r] = next_art;
                next_art += 1;
            }
        }
        Tableau { rows, basis, var_cols, n_std, n_allowed, n_cols }
    }

    fn rhs(&self, r: usize) -> f64 {
        self.rows[r][self.n_cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= piv;
        }
        let pivot_row = self.rows[r].clone();
        for (rr, row) in self.rows.iter_mut().enumerate() {
            if rr == r {
                continue;
            }
            let factor = row[c];
            if factor != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Bland's rule on the given reduced-cost row, entering restricted to
    /// columns below `allowed`. The cost row is updated in place.
    fn run(&mut self, cost: &mut Vec<f64>, allowed: usize) -> Result<(), LpError> {
        for _ in 0..MAX_PIVOTS {
            let mut entering = None;
            for j in 0..allowed {
                if cost[j] < -PIVOT_TOL && !self.basis.contains(&j) {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else { return Ok(()) };

            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][c];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - PIVOT_TOL
                                || (ratio <= lratio + PIVOT_TOL && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else { return Err(LpError::Unbounded) };

            self.pivot(r, c);
            // eliminate the entering column from the cost row
            let factor = cost[c];
            if factor != 0.0 {
                let pivot_row = &self.rows[r];
                for (v, p) in cost.iter_mut().zip(pivot_row) {
                    *v -= factor * p;
                }
                cost[c] = 0.0;
            }
        }
        Err(LpError::Stalled)
    }

    fn phase_one(&mut self) -> Result<(), LpError> {
        if self.n_allowed == self.n_cols {
            return Ok(()); // no artificials were needed
        }
        let mut cost = vec![0.0; self.n_cols + 1];
        for j in self.n_allowed..self.n_cols {
            cost[j] = 1.0;
        }
        // reduce against the artificial basis
        for r in 0..self.rows.len() {
            if self.basis[r] >= self.n_allowed {
                let row = self.rows[r].clone();
                for (v, p) in cost.iter_mut().zip(&row) {
                    *v -= p;
                }
            }
        }
        self.run(&mut cost, self.n_allowed)?;
        let infeasibility: f64 = (0..self.rows.len())
            .filter(|&r| self.basis[r] >= self.n_allowed)
            .map(|r| self.rhs(r))
            .sum();
        if infeasibility > FEASIBILITY_TOL {
            return Err(LpError::Infeasible(infeasibility));
        }
        // drive leftover zero-level artificials out of the basis; rows with
        // no eligible pivot are redundant and dropped
        let mut r = 0;
        while r < self.rows.len() {
            if self.basis[r] >= self.n_allowed {
                let col = (0..self.n_allowed).find(|&j| self.rows[r][j].abs() > PIVOT_TOL);
                match col {
                    Some(c) => self.pivot(r, c),
                    None => {
                        self.rows.swap_remove(r);
                        self.basis.swap_remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
        Ok(())
    }

    fn phase_two(&mut self, lp: &LinearProgram) -> Result<(), LpError> {
        let mut cost = vec![0.0; self.n_cols + 1];
        for (j, &c) in lp.objective.iter().enumerate() {
            let (pos, neg) = self.var_cols[j];
            cost[pos] += c;
            if let Some(neg) = neg {
                cost[neg] -= c;
            }
        }
        for r in 0..self.rows.len() {
            let b = self.basis[r];
            let factor = cost[b];
            if factor != 0.0 {
                let row = self.rows[r].clone();
                for (v, p) in cost.iter_mut().zip(&row) {
                    *v -= factor * p;
                }
                cost[b] = 0.0;
            }
        }
        self.run(&mut cost, self.n_allowed)
    }

    fn extract(&self, lp: &LinearProgram) -> LpSolution {
        let mut std_vals = vec![0.0; self.n_std];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < self.n_std {
                std_vals[b] = self.rhs(r);
            }
        }
        let variables: Vec<f64> = self
            .var_cols
            .iter()
            .map(|&(pos, neg)| std_vals[pos] - neg.map_or(0.0, |n| std_vals[n]))
            .collect();
        let objective = lp.objective.iter().zip(&variables).map(|(c, v)| c * v).sum();
        LpSolution { variables, objective }
    }
}
