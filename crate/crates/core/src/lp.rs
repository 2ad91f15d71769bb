//! Dense two-phase simplex with Bland's rule.
//!
//! Variables are bounded below (default 0) and unbounded above. The tableau is
//! rebuilt from the original rows by Gauss-Jordan elimination with partial
//! pivoting every [`REFACTOR_EVERY`] pivots to keep rounding drift in check.

use std::collections::HashSet;

use thiserror::Error;

/// Threshold below which a pivot entry or reduced cost counts as zero.
pub const PIVOT_TOL: f64 = 1e-10;
/// Phase one is declared infeasible above this artificial sum.
pub const FEAS_TOL: f64 = 1e-8;
pub const REFACTOR_EVERY: usize = 50;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("constraint row has {found} coefficients, expected {expected}")]
    RowLength { expected: usize, found: usize },
    #[error("lower bound vector has {found} entries, expected {expected}")]
    BoundsLength { expected: usize, found: usize },
    #[error("non-finite coefficient in LP data")]
    NonFinite,
    #[error("simplex exceeded {0} pivots")]
    PivotLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective in the caller's sense (maximized value for `maximize`).
    pub objective: f64,
    /// Vertex in original variables; empty unless optimal.
    pub x: Vec<f64>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// A linear program over `x >= lower`.
#[derive(Debug, Clone)]
pub struct LpProblem {
    objective: Vec<f64>,
    maximize: bool,
    eq: Vec<(Vec<f64>, f64)>,
    le: Vec<(Vec<f64>, f64)>,
    lower: Vec<f64>,
}

impl LpProblem {
    pub fn minimize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            maximize: false,
            eq: Vec::new(),
            le: Vec::new(),
            lower: vec![0.0; n],
        }
    }

    pub fn maximize(objective: Vec<f64>) -> Self {
        Self {
            maximize: true,
            ..Self::minimize(objective)
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.eq.push((row, rhs));
        self
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.le.push((row, rhs));
        self
    }

    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.le.push((row.into_iter().map(|v| -v).collect(), -rhs));
        self
    }

    pub fn set_lower_bounds(&mut self, lower: Vec<f64>) -> &mut Self {
        self.lower = lower;
        self
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n {
            return Err(LpError::BoundsLength {
                expected: n,
                found: self.lower.len(),
            });
        }
        for (row, rhs) in self.eq.iter().chain(&self.le) {
            if row.len() != n {
                return Err(LpError::RowLength {
                    expected: n,
                    found: row.len(),
                });
            }
            if !rhs.is_finite() || row.iter().any(|v| !v.is_finite()) {
                return Err(LpError::NonFinite);
            }
        }
        if self
            .objective
            .iter()
            .chain(&self.lower)
            .any(|v| !v.is_finite())
        {
            return Err(LpError::NonFinite);
        }
        Ok(())
    }

    /// Solves the program and returns an optimal vertex when one exists.
    pub fn solve(&self) -> Result<LpSolution, LpError> {
        match self.phase_two()? {
            Phase::Done(t) => Ok(self.solution_from(&t)),
            Phase::Infeasible => Ok(self.failed(LpStatus::Infeasible)),
            Phase::Unbounded => Ok(self.failed(LpStatus::Unbounded)),
        }
    }

    /// Walks optimal bases reachable by zero-reduced-cost pivots, returning the
    /// first vertex accepted by `accept`. At most `cap` pivots are spent.
    pub fn search_optimal_vertices(
        &self,
        cap: usize,
        mut accept: impl FnMut(&[f64]) -> bool,
    ) -> Result<Option<Vec<f64>>, LpError> {
        let start = match self.phase_two()? {
            Phase::Done(t) => t,
            _ => return Ok(None),
        };
        let first = self.solution_from(&start).x;
        if accept(&first) {
            return Ok(Some(first));
        }
        let mut seen = HashSet::new();
        seen.insert(start.basis_key());
        let mut queue = std::collections::VecDeque::from([start]);
        let mut spent = 0;
        while let Some(t) = queue.pop_front() {
            for (row, col) in t.optimal_pivots() {
                if spent >= cap {
                    return Ok(None);
                }
                spent += 1;
                let mut next = t.clone();
                next.pivot(row, col);
                if !seen.insert(next.basis_key()) {
                    continue;
                }
                let x = self.solution_from(&next).x;
                if accept(&x) {
                    return Ok(Some(x));
                }
                queue.push_back(next);
            }
        }
        Ok(None)
    }

    fn failed(&self, status: LpStatus) -> LpSolution {
        LpSolution {
            status,
            objective: f64::NAN,
            x: Vec::new(),
        }
    }

    fn solution_from(&self, t: &Tableau) -> LpSolution {
        let n = self.num_vars();
        let mut x = self.lower.clone();
        for (r, &b) in t.basis.iter().enumerate() {
            if b < n {
                x[b] += t.rows[r][t.width];
            }
        }
        let value: f64 = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpSolution {
            status: LpStatus::Optimal,
            objective: value,
            x,
        }
    }

    /// Builds the standard-form tableau with shifted variables `x - lower`,
    /// one slack per inequality and artificials where no slack can start basic.
    fn initial_tableau(&self) -> (Tableau, usize) {
        let n = self.num_vars();
        let n_slack = self.le.len();
        let mut rows: Vec<(Vec<f64>, f64, Option<usize>)> = Vec::new();
        for (row, rhs) in &self.eq {
            let shift: f64 = row.iter().zip(&self.lower).map(|(a, l)| a * l).sum();
            rows.push((row.clone(), rhs - shift, None));
        }
        for (k, (row, rhs)) in self.le.iter().enumerate() {
            let shift: f64 = row.iter().zip(&self.lower).map(|(a, l)| a * l).sum();
            rows.push((row.clone(), rhs - shift, Some(k)));
        }
        let n_art = rows
            .iter()
            .filter(|(_, b, s)| s.is_none() || *b < 0.0)
            .count();
        let width = n + n_slack + n_art;
        let mut table = Vec::with_capacity(rows.len());
        let mut basis = Vec::with_capacity(rows.len());
        let mut next_art = n + n_slack;
        for (coef, rhs, slack) in rows {
            let mut line = vec![0.0; width + 1];
            line[..n].copy_from_slice(&coef);
            if let Some(k) = slack {
                line[n + k] = 1.0;
            }
            line[width] = rhs;
            if rhs < 0.0 {
                line.iter_mut().for_each(|v| *v = -*v);
            }
            match slack {
                Some(k) if rhs >= 0.0 => basis.push(n + k),
                _ => {
                    line[next_art] = 1.0;
                    basis.push(next_art);
                    next_art += 1;
                }
            }
            table.push(line);
        }
        let first_art = n + n_slack;
        let mut cost = vec![0.0; width];
        cost[first_art..].iter_mut().for_each(|c| *c = 1.0);
        let t = Tableau::new(table, basis, cost, width, first_art);
        (t, first_art)
    }

    fn phase_two(&self) -> Result<Phase, LpError> {
        self.validate()?;
        let n = self.num_vars();
        let (mut t, first_art) = self.initial_tableau();
        if !t.run()? {
            unreachable!("phase one objective is bounded below by zero");
        }
        if t.objective_value() > FEAS_TOL {
            return Ok(Phase::Infeasible);
        }
        t.enterable = first_art;
        t.drive_out_artificials();
        let sign = if self.maximize { -1.0 } else { 1.0 };
        let mut cost = vec![0.0; t.width];
        for (c, &o) in cost.iter_mut().zip(&self.objective) {
            *c = sign * o;
        }
        t.cost = cost;
        t.refresh_costs();
        debug_assert!(n <= first_art);
        if t.run()? {
            Ok(Phase::Done(t))
        } else {
            Ok(Phase::Unbounded)
        }
    }
}

enum Phase {
    Done(Tableau),
    Infeasible,
    Unbounded,
}

#[derive(Clone)]
struct Tableau {
    rows: Vec<Vec<f64>>,
    original: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cost: Vec<f64>,
    reduced: Vec<f64>,
    width: usize,
    /// Columns at or beyond this index may never enter the basis.
    enterable: usize,
    pivots: usize,
}

impl Tableau {
    fn new(
        rows: Vec<Vec<f64>>,
        basis: Vec<usize>,
        cost: Vec<f64>,
        width: usize,
        first_art: usize,
    ) -> Self {
        let mut t = Self {
            original: rows.clone(),
            rows,
            basis,
            cost,
            reduced: vec![0.0; width],
            width,
            enterable: width.max(first_art),
            pivots: 0,
        };
        t.refresh_costs();
        t
    }

    fn basis_key(&self) -> Vec<usize> {
        let mut k = self.basis.clone();
        k.sort_unstable();
        k
    }

    fn refresh_costs(&mut self) {
        for j in 0..self.width {
            let mut d = self.cost[j];
            for (r, &b) in self.basis.iter().enumerate() {
                d -= self.cost[b] * self.rows[r][j];
            }
            self.reduced[j] = d;
        }
    }

    fn objective_value(&self) -> f64 {
        self.basis
            .iter()
            .enumerate()
            .map(|(r, &b)| self.cost[b] * self.rows[r][self.width])
            .sum()
    }

    /// Runs simplex iterations. Returns `false` on unboundedness.
    fn run(&mut self) -> Result<bool, LpError> {
        loop {
            let Some(col) = (0..self.enterable).find(|&j| self.reduced[j] < -PIVOT_TOL) else {
                return Ok(true);
            };
            let Some(row) = self.ratio_row(col) else {
                return Ok(false);
            };
            self.pivot(row, col);
            if self.pivots > MAX_PIVOTS {
                return Err(LpError::PivotLimit(MAX_PIVOTS));
            }
        }
    }

    /// Minimum-ratio row; ties go to the smallest basic index (Bland).
    fn ratio_row(&self, col: usize) -> Option<usize> {
        self.tied_ratio_rows(col)
            .into_iter()
            .min_by_key(|&r| self.basis[r])
    }

    fn tied_ratio_rows(&self, col: usize) -> Vec<usize> {
        let mut best = f64::INFINITY;
        let mut rows = Vec::new();
        for (r, line) in self.rows.iter().enumerate() {
            let a = line[col];
            if a > PIVOT_TOL {
                let ratio = line[self.width].max(0.0) / a;
                if ratio < best - 1e-12 {
                    best = ratio;
                    rows.clear();
                    rows.push(r);
                } else if ratio <= best + 1e-12 {
                    rows.push(r);
                }
            }
        }
        rows
    }

    /// Pivots that keep the objective optimal: zero reduced cost columns.
    fn optimal_pivots(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for col in 0..self.enterable {
            if self.basis.contains(&col) || self.reduced[col].abs() > PIVOT_TOL {
                continue;
            }
            for row in self.tied_ratio_rows(col) {
                out.push((row, col));
            }
        }
        out
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.rows[row][col];
        self.rows[row].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.rows[row].clone();
        for (r, line) in self.rows.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let f = line[col];
            if f != 0.0 {
                for (v, pv) in line.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[row] = col;
        self.pivots += 1;
        if self.pivots.is_multiple_of(REFACTOR_EVERY) {
            self.refactor();
        }
        self.refresh_costs();
    }

    /// Recomputes `B^{-1} [A | b]` from the original rows.
    fn refactor(&mut self) {
        let mut m = self.original.clone();
        let mut order: Vec<usize> = Vec::with_capacity(self.basis.len());
        let mut used = vec![false; m.len()];
        for &col in &self.basis {
            let Some(p) = (0..m.len())
                .filter(|&r| !used[r])
                .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            else {
                return;
            };
            if m[p][col].abs() < PIVOT_TOL {
                return;
            }
            used[p] = true;
            let pv = m[p][col];
            m[p].iter_mut().for_each(|v| *v /= pv);
            let pivot_row = m[p].clone();
            for (r, line) in m.iter_mut().enumerate() {
                if r != p {
                    let f = line[col];
                    if f != 0.0 {
                        for (v, pv) in line.iter_mut().zip(&pivot_row) {
                            *v -= f * pv;
                        }
                    }
                }
            }
            order.push(p);
        }
        self.rows = order.into_iter().map(|r| m[r].clone()).collect();
    }

    /// After phase one, swaps artificials at level zero for structural columns.
    /// Rows with no structural entry are redundant and keep their artificial.
    fn drive_out_artificials(&mut self) {
        for r in 0..self.rows.len() {
            if self.basis[r] < self.enterable {
                continue;
            }
            if let Some(col) = (0..self.enterable).find(|&j| self.rows[r][j].abs() > 1e-9) {
                self.pivot(r, col);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_of_lower_bounds() {
        let mut lp = LpProblem::minimize(vec![1.0]);
        lp.add_ge(vec![1.0], 3.0).add_ge(vec![1.0], 5.0);
        let s = lp.solve().unwrap();
        assert!(s.is_optimal());
        assert!((s.objective - 5.0).abs() < 1e-12);
        assert!((s.x[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_equalities() {
        let mut lp = LpProblem::minimize(vec![0.0]);
        lp.add_eq(vec![1.0], 1.0).add_eq(vec![1.0], 2.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut lp = LpProblem::maximize(vec![1.0, 1.0]);
        lp.add_le(vec![1.0, -1.0], 1.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn textbook_maximum() {
        let mut lp = LpProblem::maximize(vec![3.0, 5.0]);
        lp.add_le(vec![1.0, 0.0], 4.0)
            .add_le(vec![0.0, 2.0], 12.0)
            .add_le(vec![3.0, 2.0], 18.0);
        let s = lp.solve().unwrap();
        assert!((s.objective - 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn negative_lower_bounds() {
        let mut lp = LpProblem::minimize(vec![1.0, 2.0]);
        lp.set_lower_bounds(vec![-3.0, -1.0])
            .add_le(vec![1.0, 1.0], 0.0);
        let s = lp.solve().unwrap();
        assert!((s.objective + 5.0).abs() < 1e-12);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LpProblem::minimize(vec![1.0, 1.0]);
        lp.add_eq(vec![1.0, 1.0], 2.0).add_eq(vec![2.0, 2.0], 4.0);
        let s = lp.solve().unwrap();
        assert!((s.objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn survives_many_refactorizations() {
        // Klee-Minty cube of dimension 8 needs well over 50 Bland pivots.
        let d = 8;
        let mut obj = vec![0.0; d];
        for (j, c) in obj.iter_mut().enumerate() {
            *c = 2f64.powi((d - 1 - j) as i32);
        }
        let mut lp = LpProblem::maximize(obj);
        for i in 0..d {
            let mut row = vec![0.0; d];
            for (j, v) in row.iter_mut().enumerate().take(i) {
                *v = 2f64.powi((i - j + 1) as i32);
            }
            row[i] = 1.0;
            lp.add_le(row, 5f64.powi(i as i32 + 1));
        }
        let s = lp.solve().unwrap();
        assert!((s.objective - 5f64.powi(d as i32)).abs() < 1e-6 * 5f64.powi(d as i32));
    }

    #[test]
    fn vertex_search_finds_alternative() {
        // Every point on x + y = 1 is optimal for the zero objective.
        let mut lp = LpProblem::minimize(vec![0.0, 0.0]);
        lp.add_eq(vec![1.0, 1.0], 1.0);
        let first = lp.solve().unwrap().x;
        let found = lp
            .search_optimal_vertices(10, |x| (x[0] - first[0]).abs() > 0.5)
            .unwrap()
            .unwrap();
        assert!((found[0] + found[1] - 1.0).abs() < 1e-12);
        assert!((found[0] - first[0]).abs() > 0.5);
    }
}
