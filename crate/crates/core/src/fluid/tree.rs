//! The tree balance map: given per-class totals `a` and per-pool totals `b`
//! with equal sums, the unique matrix supported on the basic tree with those
//! row and column sums.

use std::ops::{Add, Neg, Sub};

use thiserror::Error;

use crate::allocation::{BasicTree, Vertex};
use crate::lp::{LpError, LpProblem};
use crate::matrix::Matrix;

/// Relative tolerance on `sum(a) - sum(b)` for floating inputs.
pub const BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("class totals sum to {a_sum}, pool totals to {b_sum}")]
    Unbalanced { a_sum: f64, b_sum: f64 },
    #[error("expected {expected} entries, got {found}")]
    Length { expected: usize, found: usize },
}

/// Values the elimination can run on. Integers stay exact.
pub trait Amount:
    Copy + Default + PartialEq + Add<Output = Self> + Sub<Output = Self> + Neg<Output = Self>
{
    fn to_f64(self) -> f64;
    /// Whether an imbalance this large may be absorbed into the last pool.
    fn absorbable(residual: Self, scale: f64) -> bool;
}

impl Amount for f64 {
    fn to_f64(self) -> f64 {
        self
    }

    fn absorbable(residual: f64, scale: f64) -> bool {
        residual.abs() <= BALANCE_TOL * scale.max(1.0)
    }
}

impl Amount for i64 {
    fn to_f64(self) -> f64 {
        self as f64
    }

    fn absorbable(residual: i64, _: f64) -> bool {
        residual == 0
    }
}

/// Leaf-elimination schedule over the basic tree.
#[derive(Debug, Clone)]
pub struct TreeSolver {
    classes: usize,
    pools: usize,
    /// `(leaf, edge)`: the leaf's remaining total is assigned to `edge`.
    schedule: Vec<(Vertex, (usize, usize))>,
}

impl TreeSolver {
    pub fn new(tree: &BasicTree) -> Self {
        let mut degree: Vec<usize> = (0..tree.classes())
            .map(|i| tree.degree(Vertex::Class(i)))
            .chain((0..tree.pools()).map(|j| tree.degree(Vertex::Pool(j))))
            .collect();
        let index = |v: Vertex| match v {
            Vertex::Class(i) => i,
            Vertex::Pool(j) => tree.classes() + j,
        };
        let vertex = |k: usize| {
            if k < tree.classes() {
                Vertex::Class(k)
            } else {
                Vertex::Pool(k - tree.classes())
            }
        };
        let mut removed = vec![false; degree.len()];
        let mut schedule = Vec::with_capacity(tree.edges().len());
        for _ in 0..tree.edges().len() {
            let leaf = (0..degree.len())
                .find(|&k| !removed[k] && degree[k] == 1)
                .expect("a tree with edges has a leaf");
            let v = vertex(leaf);
            let other = tree
                .neighbors(v)
                .into_iter()
                .find(|&w| !removed[index(w)])
                .expect("leaf has one live neighbour");
            let edge = match (v, other) {
                (Vertex::Class(i), Vertex::Pool(j)) | (Vertex::Pool(j), Vertex::Class(i)) => (i, j),
                _ => unreachable!("tree is bipartite"),
            };
            removed[leaf] = true;
            degree[index(other)] -= 1;
            schedule.push((v, edge));
        }
        Self {
            classes: tree.classes(),
            pools: tree.pools(),
            schedule,
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn pools(&self) -> usize {
        self.pools
    }

    pub fn schedule(&self) -> &[(Vertex, (usize, usize))] {
        &self.schedule
    }

    /// Solves for the tree-supported matrix with row sums `a` and column sums `b`.
    ///
    /// A small imbalance between the totals is moved onto the last pool first;
    /// anything larger is an error. Integer inputs must balance exactly.
    pub fn solve<T: Amount>(&self, a: &[T], b: &[T]) -> Result<Matrix<T>, TreeError> {
        if a.len() != self.classes {
            return Err(TreeError::Length {
                expected: self.classes,
                found: a.len(),
            });
        }
        if b.len() != self.pools {
            return Err(TreeError::Length {
                expected: self.pools,
                found: b.len(),
            });
        }
        let a_sum = a.iter().fold(T::default(), |s, &v| s + v);
        let b_sum = b.iter().fold(T::default(), |s, &v| s + v);
        let scale = a
            .iter()
            .chain(b)
            .map(|v| v.to_f64().abs())
            .fold(0.0, f64::max);
        let residual = a_sum - b_sum;
        if !T::absorbable(residual, scale) {
            return Err(TreeError::Unbalanced {
                a_sum: a_sum.to_f64(),
                b_sum: b_sum.to_f64(),
            });
        }
        let mut rem_a = a.to_vec();
        let mut rem_b = b.to_vec();
        rem_b[self.pools - 1] = rem_b[self.pools - 1] + residual;
        let mut phi = Matrix::zeros(self.classes, self.pools);
        for &(leaf, (i, j)) in &self.schedule {
            let flow = match leaf {
                Vertex::Class(_) => rem_a[i],
                Vertex::Pool(_) => rem_b[j],
            };
            phi[(i, j)] = flow;
            rem_a[i] = rem_a[i] - flow;
            rem_b[j] = rem_b[j] - flow;
        }
        Ok(phi)
    }

    /// Each tree entry as a linear functional of `(a, b)`, coefficients laid out
    /// as `a_1..a_I, b_1..b_J`.
    pub fn coefficients(&self) -> Vec<((usize, usize), Vec<f64>)> {
        let dim = self.classes + self.pools;
        let unit = |k: usize| {
            let mut v = vec![0.0; dim];
            v[k] = 1.0;
            v
        };
        let mut rem_a: Vec<Vec<f64>> = (0..self.classes).map(unit).collect();
        let mut rem_b: Vec<Vec<f64>> = (0..self.pools).map(|j| unit(self.classes + j)).collect();
        let mut out = Vec::with_capacity(self.schedule.len());
        for &(leaf, (i, j)) in &self.schedule {
            let flow = match leaf {
                Vertex::Class(_) => rem_a[i].clone(),
                Vertex::Pool(_) => rem_b[j].clone(),
            };
            for (x, f) in rem_a[i].iter_mut().zip(&flow) {
                *x -= f;
            }
            for (x, f) in rem_b[j].iter_mut().zip(&flow) {
                *x -= f;
            }
            out.push(((i, j), flow));
        }
        out
    }

    /// Largest entry of the map over balanced inputs with unit L1 norms.
    pub fn operator_bound(&self) -> Result<f64, LpError> {
        let (ni, nj) = (self.classes, self.pools);
        // Variables: a+, a-, b+, b-.
        let width = 2 * ni + 2 * nj;
        let mut best: f64 = 0.0;
        for (_, coef) in self.coefficients() {
            for sign in [1.0, -1.0] {
                let mut obj = vec![0.0; width];
                for k in 0..ni {
                    obj[k] = sign * coef[k];
                    obj[ni + k] = -sign * coef[k];
                }
                for k in 0..nj {
                    obj[2 * ni + k] = sign * coef[ni + k];
                    obj[2 * ni + nj + k] = -sign * coef[ni + k];
                }
                let mut lp = LpProblem::maximize(obj);
                let mut a_norm = vec![0.0; width];
                a_norm[..2 * ni].iter_mut().for_each(|v| *v = 1.0);
                let mut b_norm = vec![0.0; width];
                b_norm[2 * ni..].iter_mut().for_each(|v| *v = 1.0);
                let mut balance = vec![0.0; width];
                for k in 0..ni {
                    balance[k] = 1.0;
                    balance[ni + k] = -1.0;
                }
                for k in 0..nj {
                    balance[2 * ni + k] = -1.0;
                    balance[2 * ni + nj + k] = 1.0;
                }
                lp.add_le(a_norm, 1.0)
                    .add_le(b_norm, 1.0)
                    .add_eq(balance, 0.0);
                let sol = lp.solve()?;
                best = best.max(sol.objective);
            }
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_tree() -> BasicTree {
        BasicTree::new(2, 3, vec![(0, 0), (0, 1), (1, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn recovers_static_masses() {
        let g = TreeSolver::new(&example_tree());
        let phi = g.solve(&[1.5, 1.5], &[1.0, 1.0, 1.0]).unwrap();
        let expected = Matrix::from_rows(&[vec![1.0, 0.5, 0.0], vec![0.0, 0.5, 1.0]]).unwrap();
        assert!(phi.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn zero_maps_to_zero() {
        let g = TreeSolver::new(&example_tree());
        let phi = g.solve(&[0.0; 2], &[0.0; 3]).unwrap();
        assert_eq!(phi.max_abs(), 0.0);
    }

    #[test]
    fn integers_exact() {
        let g = TreeSolver::new(&example_tree());
        let phi = g.solve(&[150i64, 148], &[100, 99, 99]).unwrap();
        assert_eq!(phi.row_sums(), vec![150, 148]);
        assert_eq!(phi.col_sums(), vec![100, 99, 99]);
        assert!(g.solve(&[1i64, 1], &[1, 1, 1]).is_err());
    }

    #[test]
    fn unbalanced_rejected() {
        let g = TreeSolver::new(&example_tree());
        assert!(matches!(
            g.solve(&[1.0, 1.0], &[1.0, 1.0, 1.0]),
            Err(TreeError::Unbalanced { .. })
        ));
    }

    #[test]
    fn single_edge_bound_is_one() {
        let t = BasicTree::new(1, 1, vec![(0, 0)]).unwrap();
        let g = TreeSolver::new(&t);
        assert!((g.operator_bound().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(g.solve(&[2.5], &[2.5]).unwrap()[(0, 0)], 2.5);
    }

    #[test]
    fn example_bound_at_least_one() {
        let g = TreeSolver::new(&example_tree());
        assert!(g.operator_bound().unwrap() >= 1.0 - 1e-12);
    }

    #[test]
    fn coefficients_reproduce_solve() {
        let g = TreeSolver::new(&example_tree());
        let (a, b) = ([0.3, -0.7], [0.1, -0.5, 0.0]);
        let phi = g.solve(&a, &b).unwrap();
        for ((i, j), c) in g.coefficients() {
            let v: f64 = c.iter().zip(a.iter().chain(&b)).map(|(x, y)| x * y).sum();
            assert!((v - phi[(i, j)]).abs() < 1e-12);
        }
    }
}
