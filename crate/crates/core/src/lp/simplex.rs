//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Solves `min cᵀx` subject to `A_ub x <= b_ub`, `A_eq x = b_eq`, `x >= 0`.
//!
//! The entering column is always the lowest-index improving one. The ratio
//! test is Harris' two-pass variant (largest pivot among rows whose ratio is
//! within `HARRIS_TOL` of the minimum), falling back to the exact minimum with
//! lowest basic index after a run of degenerate pivots so cycling cannot
//! persist. The tableau is rebuilt from the original data by LU every
//! `REINVERT_EVERY` pivots and before optimality is accepted.

use crate::error::{Error, Result};
use crate::linalg::{dot, Dense, Lu};

/// Smallest tableau entry accepted as a pivot.
pub const PIVOT_TOL: f64 = 1e-10;
/// Reduced-cost threshold for optimality.
pub const OPT_TOL: f64 = 1e-9;
/// Phase-one residual above which the program is declared infeasible.
pub const FEAS_TOL: f64 = 1e-8;
/// Bases of these programs can be badly conditioned without being singular.
const BASIS_SINGULAR_TOL: f64 = 1e-15;
const MAX_ITERATIONS: usize = 200_000;
const REINVERT_EVERY: usize = 40;
const DEGENERATE_RUN: usize = 50;
/// Bound overshoot allowed in the ratio test in exchange for a larger pivot.
const HARRIS_TOL: f64 = 1e-9;
/// Basic values below minus this are pivoted out once the primal phase ends.
const REPAIR_TOL: f64 = 1e-12;
const REPAIR_ROUNDS: usize = 5;

#[derive(Debug, Clone)]
pub struct SimplexOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    /// ∂objective/∂b for each inequality row (non-positive at a minimum).
    pub duals_ub: Vec<f64>,
    pub duals_eq: Vec<f64>,
    pub iterations: usize,
}

struct Tableau {
    // original sign-normalised columns, artificials included
    a: Dense,
    b: Vec<f64>,
    t: Dense,
    // reduced costs, last entry holds minus the objective
    cost: Vec<f64>,
    phase_cost: Vec<f64>,
    basis: Vec<usize>,
    iterations: usize,
    since_reinvert: usize,
    degenerate_run: usize,
}

impl Tableau {
    fn width(&self) -> usize {
        self.t.cols() - 1
    }

    fn rhs(&self, i: usize) -> f64 {
        self.t[(i, self.width())]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let cols = self.t.cols();
        let p = self.t[(r, c)];
        for v in self.t.row_mut(r) {
            *v /= p;
        }
        let pivot_row = self.t.row(r).to_vec();
        for i in 0..self.t.rows() {
            if i == r {
                continue;
            }
            let f = self.t[(i, c)];
            if f != 0.0 {
                let row = self.t.row_mut(i);
                for j in 0..cols {
                    row[j] -= f * pivot_row[j];
                }
                row[c] = 0.0;
            }
        }
        let f = self.cost[c];
        if f != 0.0 {
            for j in 0..cols {
                self.cost[j] -= f * pivot_row[j];
            }
            self.cost[c] = 0.0;
        }
        self.basis[r] = c;
        self.iterations += 1;
        self.since_reinvert += 1;
    }

    fn set_cost(&mut self, c: &[f64]) {
        self.phase_cost = c.to_vec();
        self.refresh_cost();
    }

    fn refresh_cost(&mut self) {
        let w = self.width();
        self.cost = self.phase_cost.clone();
        self.cost.push(0.0);
        for i in 0..self.t.rows() {
            let cb = self.phase_cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..=w {
                    self.cost[j] -= cb * self.t[(i, j)];
                }
            }
        }
    }

    fn basis_lu(&self) -> Option<Lu> {
        let m = self.t.rows();
        let mut bmat = Dense::zeros(m, m);
        for i in 0..m {
            for (k, &col) in self.basis.iter().enumerate() {
                bmat[(i, k)] = self.a[(i, col)];
            }
        }
        Lu::factor_with_tol(bmat, BASIS_SINGULAR_TOL)
    }

    /// Rebuilds `B⁻¹[A | b]` and the reduced costs from the original data.
    fn reinvert(&mut self) {
        self.since_reinvert = 0;
        // keep the running tableau if the basis cannot be refactored
        let Some(lu) = self.basis_lu() else {
            return;
        };
        let w = self.width();
        for j in 0..w {
            let col = lu.solve(&self.a.col(j));
            for (i, v) in col.into_iter().enumerate() {
                self.t[(i, j)] = if v.abs() < 1e-14 { 0.0 } else { v };
            }
        }
        for (i, v) in lu.solve(&self.b).into_iter().enumerate() {
            self.t[(i, w)] = v;
        }
        for (i, &col) in self.basis.clone().iter().enumerate() {
            for k in 0..self.t.rows() {
                self.t[(k, col)] = if k == i { 1.0 } else { 0.0 };
            }
        }
        self.refresh_cost();
    }

    /// Harris two-pass ratio test: the step may overshoot a bound by at most
    /// `HARRIS_TOL`, and within that window the largest pivot wins. During a long
    /// degenerate run the exact minimum ratio with lowest basic index is used.
    fn choose_row(&self, enter: usize) -> Option<usize> {
        let rows = 0..self.t.rows();
        let eligible = |i: &usize| self.t[(*i, enter)] > PIVOT_TOL;
        let ratio = |i: usize| self.rhs(i).max(0.0) / self.t[(i, enter)];
        if self.degenerate_run >= DEGENERATE_RUN {
            let min = rows.clone().filter(eligible).map(ratio).fold(f64::INFINITY, f64::min);
            return rows
                .filter(eligible)
                .filter(|&i| ratio(i) <= min)
                .min_by_key(|&i| self.basis[i]);
        }
        let bound = rows
            .clone()
            .filter(eligible)
            .map(|i| (self.rhs(i).max(0.0) + HARRIS_TOL) / self.t[(i, enter)])
            .fold(f64::INFINITY, f64::min);
        if !bound.is_finite() {
            return None;
        }
        rows.filter(eligible)
            .filter(|&i| ratio(i) <= bound)
            .max_by(|&i, &j| self.t[(i, enter)].total_cmp(&self.t[(j, enter)]))
    }

    /// Pivots until no allowed column has a negative reduced cost.
    fn optimize(&mut self, allowed: &[bool]) -> Result<()> {
        loop {
            if self.iterations > MAX_ITERATIONS {
                return Err(Error::InconsistentSolution("simplex iteration limit reached".into()));
            }
            if self.since_reinvert >= REINVERT_EVERY {
                self.reinvert();
            }
            let Some(enter) = (0..self.width()).find(|&j| allowed[j] && self.cost[j] < -OPT_TOL) else {
                if self.since_reinvert == 0 {
                    return Ok(());
                }
                // confirm optimality on a fresh tableau
                self.reinvert();
                continue;
            };
            let Some(r) = self.choose_row(enter) else {
                return Err(Error::Unbounded);
            };
            let step = self.rhs(r).max(0.0) / self.t[(r, enter)];
            if step * -self.cost[enter] <= 1e-14 {
                self.degenerate_run += 1;
            } else {
                self.degenerate_run = 0;
            }
            // a leaving value pushed below zero by an earlier Harris step would
            // enter as a large negative value through a small pivot
            if self.rhs(r) < 0.0 {
                let w = self.width();
                self.t[(r, w)] = 0.0;
            }
            self.pivot(r, enter);
        }
    }

    /// Dual simplex pivots on a fresh tableau until no basic value is below
    /// `-REPAIR_TOL`. Reduced costs stay optimal, so only the overshoot left by
    /// Harris steps is removed. Returns the number of pivots.
    fn repair(&mut self, allowed: &[bool]) -> Result<usize> {
        let w = self.width();
        let mut pivots = 0;
        self.reinvert();
        while let Some(r) = (0..self.t.rows())
            .filter(|&i| self.rhs(i) < -REPAIR_TOL)
            .min_by(|&i, &j| self.rhs(i).total_cmp(&self.rhs(j)))
        {
            if self.iterations > MAX_ITERATIONS {
                return Err(Error::InconsistentSolution("simplex iteration limit reached".into()));
            }
            let ratio = |j: usize| self.cost[j].max(0.0) / -self.t[(r, j)];
            let enter = (0..w)
                .filter(|&j| allowed[j] && !self.basis.contains(&j) && self.t[(r, j)] < -PIVOT_TOL)
                .min_by(|&i, &j| {
                    ratio(i)
                        .total_cmp(&ratio(j))
                        .then(self.t[(r, i)].total_cmp(&self.t[(r, j)]))
                });
            let Some(enter) = enter else {
                return Err(Error::InconsistentSolution(format!(
                    "basic value {:e} cannot be made non-negative",
                    self.rhs(r)
                )));
            };
            self.pivot(r, enter);
            pivots += 1;
            if self.since_reinvert >= REINVERT_EVERY {
                self.reinvert();
            }
        }
        Ok(pivots)
    }

    fn remove_row(&mut self, r: usize) {
        self.t = remove_row(&self.t, r);
        self.a = remove_row(&self.a, r);
        self.b.remove(r);
        self.basis.remove(r);
    }
}

pub fn minimize(c: &[f64], a_ub: &Dense, b_ub: &[f64], a_eq: &Dense, b_eq: &[f64]) -> Result<SimplexOutcome> {
    let n = c.len();
    let m1 = b_ub.len();
    let m2 = b_eq.len();
    let m = m1 + m2;
    assert!(a_ub.rows() == m1 && a_eq.rows() == m2);
    assert!((m1 == 0 || a_ub.cols() == n) && (m2 == 0 || a_eq.cols() == n));

    // Sign-normalised rows: every right-hand side non-negative.
    let mut sign = vec![1.0; m];
    let mut needs_art = vec![false; m];
    for i in 0..m1 {
        if b_ub[i] < 0.0 {
            sign[i] = -1.0;
            needs_art[i] = true;
        }
    }
    for i in 0..m2 {
        needs_art[m1 + i] = true;
        if b_eq[i] < 0.0 {
            sign[m1 + i] = -1.0;
        }
    }
    let n_art = needs_art.iter().filter(|&&b| b).count();
    let width = n + m1 + n_art;

    let mut a = Dense::zeros(m, width);
    let mut b = vec![0.0; m];
    let mut basis = vec![0; m];
    let mut art = n + m1;
    for i in 0..m {
        let (row, rhs) = if i < m1 { (a_ub.row(i), b_ub[i]) } else { (a_eq.row(i - m1), b_eq[i - m1]) };
        for j in 0..n {
            a[(i, j)] = sign[i] * row[j];
        }
        if i < m1 {
            a[(i, n + i)] = sign[i];
        }
        b[i] = sign[i] * rhs;
        if needs_art[i] {
            a[(i, art)] = 1.0;
            basis[i] = art;
            art += 1;
        } else {
            basis[i] = n + i;
        }
    }
    let mut t = Dense::zeros(m, width + 1);
    for i in 0..m {
        t.row_mut(i)[..width].copy_from_slice(a.row(i));
        t[(i, width)] = b[i];
    }
    let mut tab = Tableau {
        a,
        b,
        t,
        cost: Vec::new(),
        phase_cost: Vec::new(),
        basis,
        iterations: 0,
        since_reinvert: 0,
        degenerate_run: 0,
    };

    let is_art = |j: usize| j >= n + m1;
    let mut rows_kept: Vec<usize> = (0..m).collect();
    if n_art > 0 {
        let phase1: Vec<f64> = (0..width).map(|j| if is_art(j) { 1.0 } else { 0.0 }).collect();
        tab.set_cost(&phase1);
        tab.optimize(&vec![true; width])?;
        let infeas = -tab.cost[width];
        if infeas > FEAS_TOL {
            return Err(Error::LpInfeasible);
        }
        // Drive remaining artificials out of the basis or drop their rows as redundant.
        let mut i = 0;
        while i < tab.t.rows() {
            if is_art(tab.basis[i]) {
                let col = (0..n + m1)
                    .filter(|&j| tab.t[(i, j)].abs() > PIVOT_TOL)
                    .max_by(|&p, &q| tab.t[(i, p)].abs().total_cmp(&tab.t[(i, q)].abs()));
                match col {
                    Some(j) => tab.pivot(i, j),
                    None => {
                        tab.remove_row(i);
                        rows_kept.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    let mut phase2 = c.to_vec();
    phase2.resize(width, 0.0);
    tab.set_cost(&phase2);
    tab.degenerate_run = 0;
    let allowed: Vec<bool> = (0..width).map(|j| !is_art(j)).collect();
    tab.optimize(&allowed)?;
    for _ in 0..REPAIR_ROUNDS {
        if tab.repair(&allowed)? == 0 {
            break;
        }
        tab.optimize(&allowed)?;
    }

    // Final values straight from the basis factorisation.
    let mut full = vec![0.0; width];
    let mut duals = vec![0.0; m];
    match tab.basis_lu() {
        Some(lu) => {
            for (k, v) in lu.solve(&tab.b).into_iter().enumerate() {
                full[tab.basis[k]] = v;
            }
            let cb: Vec<f64> = tab.basis.iter().map(|&col| phase2[col]).collect();
            let y = lu.solve_transpose(&cb);
            for (r, &orig) in rows_kept.iter().enumerate() {
                duals[orig] = sign[orig] * y[r];
            }
        }
        None => {
            return Err(Error::InconsistentSolution("final simplex basis is singular".into()));
        }
    }
    let x = full[..n].to_vec();
    let objective = dot(c, &x);
    Ok(SimplexOutcome {
        x,
        objective,
        duals_ub: duals[..m1].to_vec(),
        duals_eq: duals[m1..].to_vec(),
        iterations: tab.iterations,
    })
}

fn remove_row(t: &Dense, r: usize) -> Dense {
    let mut out = Dense::zeros(t.rows() - 1, t.cols());
    let mut k = 0;
    for i in 0..t.rows() {
        if i != r {
            out.row_mut(k).copy_from_slice(t.row(i));
            k += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: &[&[f64]]) -> Dense {
        Dense::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    #[test]
    fn textbook_maximisation() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), value 36
        let a = dense(&[&[1.0, 0.0], &[0.0, 2.0], &[3.0, 2.0]]);
        let out = minimize(&[-3.0, -5.0], &a, &[4.0, 12.0, 18.0], &Dense::zeros(0, 2), &[]).unwrap();
        assert!((out.x[0] - 2.0).abs() < 1e-12 && (out.x[1] - 6.0).abs() < 1e-12);
        assert!((out.objective + 36.0).abs() < 1e-12);
        // shadow prices of the binding rows: 0, -1.5, -1
        assert!((out.duals_ub[1] + 1.5).abs() < 1e-12);
        assert!((out.duals_ub[2] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn equality_and_redundant_rows() {
        // x + y = 1 twice, min x - y -> (0, 1)
        let eq = dense(&[&[1.0, 1.0], &[2.0, 2.0]]);
        let out = minimize(&[1.0, -1.0], &Dense::zeros(0, 2), &[], &eq, &[1.0, 2.0]).unwrap();
        assert!((out.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let eq = dense(&[&[1.0, 1.0]]);
        let ub = dense(&[&[1.0, 1.0]]);
        assert_eq!(minimize(&[0.0, 0.0], &ub, &[1.0], &eq, &[2.0]).unwrap_err(), Error::LpInfeasible);
        let open = dense(&[&[1.0, -1.0]]);
        assert_eq!(
            minimize(&[-1.0, 0.0], &open, &[1.0], &Dense::zeros(0, 2), &[]).unwrap_err(),
            Error::Unbounded
        );
    }

    #[test]
    fn negative_rhs_row() {
        // x >= 2 written as -x <= -2, min x
        let ub = dense(&[&[-1.0]]);
        let out = minimize(&[1.0], &ub, &[-2.0], &Dense::zeros(0, 1), &[]).unwrap();
        assert!((out.x[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under the largest-coefficient rule.
        let ub = dense(&[
            &[0.25, -60.0, -0.04, 9.0],
            &[0.5, -90.0, -0.02, 3.0],
            &[0.0, 0.0, 1.0, 0.0],
        ]);
        let out = minimize(&[-0.75, 150.0, -0.02, 6.0], &ub, &[0.0, 0.0, 1.0], &Dense::zeros(0, 4), &[]).unwrap();
        assert!((out.objective + 0.05).abs() < 1e-12);
    }
}
