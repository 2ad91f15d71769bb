//! Constants of the drain/hold construction and the drain allocation.

use serde::Serialize;
use thiserror::Error;

use super::tree::TreeSolver;
use crate::allocation::StaticAllocation;
use crate::lp::LpError;
use crate::matrix::{l1, Matrix};
use crate::network::NetworkSpec;
use crate::paths::SimplePath;

/// Allowed gap between the directly computed drift total and its closed form.
pub const DRIFT_CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ConstantsError {
    #[error("witness path weight {0} is not negative")]
    NonNegativeWitness(f64),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Error, PartialEq)]
pub enum PsiTildeError {
    #[error("perturbation entry ({class}, {pool}) = {value} exceeds eps^2 = {bound}")]
    BetaTooLarge {
        class: usize,
        pool: usize,
        value: f64,
        bound: f64,
    },
    #[error(
        "epsilon not small enough: drain allocation entry ({class}, {pool}) = {value} is negative"
    )]
    Negative {
        class: usize,
        pool: usize,
        value: f64,
    },
    #[error(
        "epsilon not small enough: drain allocation overfills pool {pool} ({load} > {capacity})"
    )]
    Overfull {
        pool: usize,
        load: f64,
        capacity: f64,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct FluidConstants {
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    pub sigma_zero: f64,
    pub alpha: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub a0: f64,
    pub c_g: f64,
    /// Drift of `X` under the drain allocation with zero rounding.
    pub r: Vec<f64>,
    pub e_dot_r: f64,
    /// Closed-form value of `e_dot_r` from the path sums.
    pub e_dot_r_closed_form: f64,
    /// Set when the two drift totals disagree beyond [`DRIFT_CHECK_TOL`].
    pub drift_mismatch: bool,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub c3: f64,
    pub c_h: f64,
    pub l_h: f64,
}

impl FluidConstants {
    /// Upper bound on busy time and on deviation from `x*`.
    pub fn gamma1(&self, eps: f64) -> f64 {
        2.0 * self.m1.max(1.0) * eps.sqrt()
    }

    /// Horizon over which the bounds of [`Self::gamma1`] apply.
    pub fn gamma2(&self, eps: f64) -> f64 {
        self.m3 / 4.0 * eps.ln().abs()
    }
}

/// Where each class-pool pair sits relative to the witness path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeRole {
    Plus,
    Minus,
    OffPathBasic,
    OffPathNonbasic,
}

pub fn edge_role(alloc: &StaticAllocation, path: &SimplePath, i: usize, j: usize) -> EdgeRole {
    match path.sign_of(i, j) {
        Some(s) if s > 0 => EdgeRole::Plus,
        Some(_) => EdgeRole::Minus,
        None if alloc.is_basic(i, j) => EdgeRole::OffPathBasic,
        None => EdgeRole::OffPathNonbasic,
    }
}

pub fn compute_constants(
    alloc: &StaticAllocation,
    witness: &SimplePath,
    spec: &NetworkSpec,
) -> Result<FluidConstants, ConstantsError> {
    if witness.weight >= 0.0 {
        return Err(ConstantsError::NonNegativeWitness(witness.weight));
    }
    let mu = spec.mu();
    let (mut sp, mut sm, mut s0) = (0.0, 0.0, 0.0);
    for i in 0..spec.classes() {
        for j in 0..spec.pools() {
            match edge_role(alloc, witness, i, j) {
                EdgeRole::Plus => sp += mu[(i, j)],
                EdgeRole::Minus => sm += mu[(i, j)],
                EdgeRole::OffPathBasic => s0 += mu[(i, j)],
                EdgeRole::OffPathNonbasic => {}
            }
        }
    }
    let alpha = 0.5 * (1.0 + sp / sm);
    let delta1 = 0.5
        * alloc
            .basic_edges()
            .iter()
            .map(|&(i, j)| alloc.psi_star[(i, j)])
            .fold(f64::INFINITY, f64::min);
    let delta2 = if s0 > 0.0 {
        delta1 * ((alpha * sm - sp) / (2.0 * s0)).min(1.0 - alpha)
    } else {
        0.0
    };
    let solver = TreeSolver::new(&alloc.tree);
    let c_g = solver.operator_bound()?;
    let a0 = delta1 / (2.0 * c_g);

    let psi0 = psi_tilde_unchecked(alloc, witness, alpha, delta1, delta2, None);
    let r: Vec<f64> = (0..spec.classes())
        .map(|i| {
            spec.lambda()[i]
                - (0..spec.pools())
                    .map(|j| mu[(i, j)] * psi0[(i, j)])
                    .sum::<f64>()
        })
        .collect();
    let e_dot_r: f64 = r.iter().sum();
    let closed = delta2 * s0 + delta1 * sp - alpha * delta1 * sm;
    let drift_mismatch = (e_dot_r - closed).abs() > DRIFT_CHECK_TOL * (1.0 + closed.abs());

    let total_mu = spec.total_rate();
    let m1 = 24.0 / e_dot_r.abs();
    let c_h = c_g * total_mu;
    let l_h = (1.0 + 1e-6f64).max(2.0 * c_g * total_mu);
    let m2 = 7.0 + 2.0 * l1(&r) * m1;
    let c3 = 1.0 + l_h / (c_h * m2);
    let m3 = 1.0 / (c3 * c_h * m2);
    Ok(FluidConstants {
        sigma_plus: sp,
        sigma_minus: sm,
        sigma_zero: s0,
        alpha,
        delta1,
        delta2,
        a0,
        c_g,
        r,
        e_dot_r,
        e_dot_r_closed_form: closed,
        drift_mismatch,
        m1,
        m2,
        m3,
        c3,
        c_h,
        l_h,
    })
}

fn psi_tilde_unchecked(
    alloc: &StaticAllocation,
    witness: &SimplePath,
    alpha: f64,
    delta1: f64,
    delta2: f64,
    beta: Option<&Matrix>,
) -> Matrix {
    let (ni, nj) = (alloc.psi_star.rows(), alloc.psi_star.cols());
    Matrix::from_fn(ni, nj, |i, j| {
        let b = beta.map_or(0.0, |m| m[(i, j)]);
        let base = alloc.psi_star[(i, j)];
        match edge_role(alloc, witness, i, j) {
            EdgeRole::Minus => base + alpha * delta1 + b,
            EdgeRole::Plus => base - delta1 + b,
            EdgeRole::OffPathBasic => base - delta2 + b,
            // No rounding term here: these pairs carry no mass in either allocation.
            EdgeRole::OffPathNonbasic => 0.0,
        }
    })
}

/// The drain allocation: path edges shifted by the witness signs, other basic
/// edges lowered slightly, plus the rounding matrix `beta` (`|beta| <= eps^2`).
pub fn build_psi_tilde(
    alloc: &StaticAllocation,
    constants: &FluidConstants,
    witness: &SimplePath,
    spec: &NetworkSpec,
    beta: Option<&Matrix>,
    eps: f64,
) -> Result<Matrix, PsiTildeError> {
    if let Some(b) = beta {
        let bound = eps * eps;
        if let Some((class, pool, &value)) =
            b.iter().find(|(_, _, &v)| v.abs() > bound * (1.0 + 1e-12))
        {
            return Err(PsiTildeError::BetaTooLarge {
                class,
                pool,
                value,
                bound,
            });
        }
    }
    let psi = psi_tilde_unchecked(
        alloc,
        witness,
        constants.alpha,
        constants.delta1,
        constants.delta2,
        beta,
    );
    if let Some((class, pool, &value)) = psi.iter().find(|(_, _, &v)| v < 0.0) {
        return Err(PsiTildeError::Negative { class, pool, value });
    }
    // Capacity check with the rounding allowance of one eps^2 per activity.
    let margin = spec.activities().count() as f64 * eps * eps;
    for (pool, (&load, &capacity)) in psi.col_sums().iter().zip(spec.nu()).enumerate() {
        if load > capacity + margin {
            return Err(PsiTildeError::Overfull {
                pool,
                load,
                capacity,
            });
        }
    }
    Ok(psi)
}

/// Linearized hold-phase drift: `-sum_j mu_ij G_ij(x, x_e e_{j0})`.
pub fn hold_drift(solver: &TreeSolver, spec: &NetworkSpec, x: &[f64], j0: usize) -> Vec<f64> {
    let mut b = vec![0.0; spec.pools()];
    b[j0] = x.iter().sum();
    let g = solver.solve(x, &b).expect("balanced by construction");
    (0..spec.classes())
        .map(|i| {
            -(0..spec.pools())
                .map(|j| spec.mu()[(i, j)] * g[(i, j)])
                .sum::<f64>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::solve_static;
    use crate::network::builtin_example;
    use crate::paths::classify;

    fn example(id: u32) -> (NetworkSpec, StaticAllocation, SimplePath) {
        let spec = builtin_example(id).unwrap();
        let alloc = solve_static(&spec).unwrap();
        let w = classify(&alloc, &spec).unwrap().witness_path.unwrap();
        (spec, alloc, w)
    }

    #[test]
    fn example_one_constants() {
        let (spec, alloc, w) = example(1);
        let c = compute_constants(&alloc, &w, &spec).unwrap();
        assert_eq!((c.sigma_plus, c.sigma_minus), (7.0, 11.0));
        // The off-path basic edge (2, pool 3) has rate 2.
        assert_eq!(c.sigma_zero, 2.0);
        assert!((c.alpha - 9.0 / 11.0).abs() < 1e-15);
        assert_eq!(c.delta1, 0.25);
        assert!((c.delta2 - 1.0 / 22.0).abs() < 1e-15);
        assert!((c.e_dot_r + 9.0 / 22.0).abs() < 1e-12);
        assert!((c.m1 - 176.0 / 3.0).abs() < 1e-9);
        assert!(!c.drift_mismatch);
        assert!(c.m3 < 1.0);
        assert!((c.a0 - c.delta1 / (2.0 * c.c_g)).abs() < 1e-15);
    }

    #[test]
    fn example_one_drain_allocation() {
        let (spec, alloc, w) = example(1);
        let c = compute_constants(&alloc, &w, &spec).unwrap();
        let psi = build_psi_tilde(&alloc, &c, &w, &spec, None, 1e-3).unwrap();
        assert!((psi[(0, 0)] - 0.75).abs() < 1e-15);
        assert!((psi[(0, 1)] - (0.5 + 9.0 / 44.0)).abs() < 1e-15);
        for (load, cap) in psi.col_sums().iter().zip(spec.nu()) {
            assert!(*load <= cap - (1.0 - c.alpha) * c.delta1 + 1e-12);
        }
    }

    #[test]
    fn oversized_beta_rejected() {
        let (spec, alloc, w) = example(1);
        let c = compute_constants(&alloc, &w, &spec).unwrap();
        let mut beta = Matrix::zeros(2, 3);
        beta[(0, 0)] = 2.0 * 1e-6;
        let err = build_psi_tilde(&alloc, &c, &w, &spec, Some(&beta), 1e-3).unwrap_err();
        assert!(matches!(err, PsiTildeError::BetaTooLarge { .. }));
    }

    #[test]
    fn open_witness_constants() {
        let (spec, alloc, w) = example(2);
        let c = compute_constants(&alloc, &w, &spec).unwrap();
        assert_eq!(
            (c.sigma_plus, c.sigma_minus, c.sigma_zero),
            (7.0, 10.0, 2.0)
        );
        assert!((c.alpha - 0.85).abs() < 1e-15);
        assert!((c.delta2 - 0.0375).abs() < 1e-15);
        assert!(c.e_dot_r < 0.0 && c.alpha > 0.5 && c.alpha < 1.0);
    }
}
