//! The drain/hold control policy at scale `n`, in integer arithmetic.
//!
//! Nothing here touches randomness: decisions are a function of the current
//! counts and the policy's own history, which is what makes replay possible.

use serde::Serialize;
use thiserror::Error;

use crate::allocation::StaticAllocation;
use crate::fluid::constants::{build_psi_tilde, FluidConstants, PsiTildeError};
use crate::fluid::trajectory::Phase as FluidPhase;
use crate::fluid::tree::TreeSolver;
use crate::matrix::Matrix;
use crate::network::{NetworkSpec, ScaledSystem};
use crate::paths::SimplePath;

#[derive(Debug, Error, PartialEq)]
pub enum SetupError {
    #[error("n = {n} too small: eps_n = ln(n)/sqrt(n) = {eps_n} must be positive")]
    DegenerateEps { n: u64, eps_n: f64 },
    #[error("n = {n} too small: rounding of n*psi at ({class}, {pool}) is {beta}, beyond eps_n^2 = {bound}")]
    Rounding {
        n: u64,
        class: usize,
        pool: usize,
        beta: f64,
        bound: f64,
    },
    #[error("n = {n} too small: drain allocation needs {load} servers in pool {pool}, which has {servers}")]
    Capacity {
        n: u64,
        pool: usize,
        load: i64,
        servers: i64,
    },
    #[error("n = {n} too small: {source}")]
    PsiTilde { n: u64, source: PsiTildeError },
    #[error("scaled system does not match the network dimensions")]
    Dimension,
}

/// Everything fixed for a run at scale `n`.
#[derive(Debug, Clone, Serialize)]
pub struct SimSetup {
    pub n: u64,
    pub eps_n: f64,
    /// `n psi_tilde^n`, integer valued.
    pub psi_tilde_n: Matrix<i64>,
    /// `psi_tilde^n - psi_tilde`.
    pub beta: Matrix,
    pub theta: Vec<f64>,
    pub x_star: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Matrix,
    pub servers: Vec<i64>,
    pub x0: Vec<i64>,
    pub lambda_n: Vec<f64>,
    pub i0: usize,
    pub j0: usize,
    #[serde(skip)]
    pub solver: TreeSolver,
}

impl SimSetup {
    pub fn new(
        sys: &ScaledSystem,
        spec: &NetworkSpec,
        alloc: &StaticAllocation,
        constants: &FluidConstants,
        witness: &SimplePath,
    ) -> Result<Self, SetupError> {
        let (ni, nj) = (spec.classes(), spec.pools());
        if sys.lambda_n.len() != ni || sys.servers.len() != nj || sys.x0.len() != ni {
            return Err(SetupError::Dimension);
        }
        let n = sys.n;
        let nf = n as f64;
        let eps_n = nf.ln() / nf.sqrt();
        if eps_n.is_nan() || eps_n <= 0.0 {
            return Err(SetupError::DegenerateEps { n, eps_n });
        }
        let psi = build_psi_tilde(alloc, constants, witness, spec, None, eps_n)
            .map_err(|source| SetupError::PsiTilde { n, source })?;
        let psi_tilde_n = psi.map(|v| (nf * v).round() as i64);
        let beta = Matrix::from_fn(ni, nj, |i, j| psi_tilde_n[(i, j)] as f64 / nf - psi[(i, j)]);
        let bound = eps_n * eps_n;
        if let Some((class, pool, &b)) = beta.iter().find(|(_, _, b)| b.abs() > bound) {
            return Err(SetupError::Rounding {
                n,
                class,
                pool,
                beta: b,
                bound,
            });
        }
        for (pool, (&load, &servers)) in psi_tilde_n.col_sums().iter().zip(&sys.servers).enumerate()
        {
            if load > servers {
                return Err(SetupError::Capacity {
                    n,
                    pool,
                    load,
                    servers,
                });
            }
        }
        let theta = sys
            .servers
            .iter()
            .zip(spec.nu())
            .map(|(&s, v)| s as f64 / nf - v)
            .collect();
        Ok(Self {
            n,
            eps_n,
            psi_tilde_n,
            beta,
            theta,
            x_star: alloc.x_star.clone(),
            lambda: spec.lambda().to_vec(),
            mu: sys.mu_n.clone(),
            servers: sys.servers.clone(),
            x0: sys.x0.clone(),
            lambda_n: sys.lambda_n.clone(),
            i0: 0,
            j0: 0,
            solver: TreeSolver::new(&alloc.tree),
        })
    }

    pub fn classes(&self) -> usize {
        self.x0.len()
    }

    pub fn pools(&self) -> usize {
        self.servers.len()
    }

    /// `|X/n - x*|_1`.
    pub fn deviation(&self, x: &[i64]) -> f64 {
        let nf = self.n as f64;
        x.iter()
            .zip(&self.x_star)
            .map(|(&v, s)| (v as f64 / nf - s).abs())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Drain,
    Hold,
    /// All service stopped after the stopping time fired.
    PostTau,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Drain => "drain",
            Phase::Hold => "hold",
            Phase::PostTau => "post_tau",
        }
    }
}

impl From<FluidPhase> for Phase {
    fn from(p: FluidPhase) -> Self {
        match p {
            FluidPhase::Drain => Phase::Drain,
            FluidPhase::Hold => Phase::Hold,
        }
    }
}

/// Queue, idle and in-service counts chosen by the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub y: Vec<i64>,
    pub z: Vec<i64>,
    pub psi: Matrix<i64>,
}

impl Assignment {
    pub fn queued(&self) -> i64 {
        self.y.iter().sum()
    }
}

/// A sign or balance failure found while assigning.
#[derive(Debug, Clone, PartialEq)]
pub struct Infeasible {
    pub quantity: String,
    pub value: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    EnterHold,
    EnterDrain,
    TauTilde,
    Sigma,
}

impl Transition {
    pub fn as_str(self) -> &'static str {
        match self {
            Transition::EnterHold => "enter_hold",
            Transition::EnterDrain => "enter_drain",
            Transition::TauTilde => "tau_tilde",
            Transition::Sigma => "sigma",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Policy {
    pub phase: Phase,
    /// Index of the current (or last) drain interval.
    pub k: usize,
    pub anchor_drain: Vec<i64>,
    pub anchor_hold: Vec<i64>,
    pub tau_tilde: Option<f64>,
    pub sigma: Option<f64>,
    pub zetas: Vec<f64>,
    pub etas: Vec<f64>,
}

impl Policy {
    pub fn new(x0: &[i64]) -> Self {
        Self {
            phase: Phase::Drain,
            k: 1,
            anchor_drain: x0.to_vec(),
            anchor_hold: x0.to_vec(),
            tau_tilde: None,
            sigma: None,
            zetas: Vec::new(),
            etas: Vec::new(),
        }
    }

    pub fn tau(&self) -> Option<f64> {
        match (self.tau_tilde, self.sigma) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Allocation for counts `x` in the current phase.
    pub fn assign(&self, setup: &SimSetup, x: &[i64]) -> Result<Assignment, Infeasible> {
        let (ni, nj) = (setup.classes(), setup.pools());
        let out = match self.phase {
            Phase::PostTau => Assignment {
                y: x.to_vec(),
                z: setup.servers.clone(),
                psi: Matrix::zeros(ni, nj),
            },
            Phase::Drain => {
                let psi = setup.psi_tilde_n.clone();
                let y = x.iter().zip(psi.row_sums()).map(|(x, r)| x - r).collect();
                let z = setup
                    .servers
                    .iter()
                    .zip(psi.col_sums())
                    .map(|(s, c)| s - c)
                    .collect();
                Assignment { y, z, psi }
            }
            Phase::Hold => {
                let excess = x.iter().sum::<i64>() - setup.servers.iter().sum::<i64>();
                let mut y = vec![0; ni];
                let mut z = vec![0; nj];
                y[setup.i0] = excess.max(0);
                z[setup.j0] = (-excess).max(0);
                let a: Vec<i64> = x.iter().zip(&y).map(|(x, y)| x - y).collect();
                let b: Vec<i64> = setup.servers.iter().zip(&z).map(|(s, z)| s - z).collect();
                let psi = setup.solver.solve(&a, &b).map_err(|e| Infeasible {
                    quantity: format!("tree balance: {e}"),
                    value: excess,
                })?;
                Assignment { y, z, psi }
            }
        };
        check_signs(&out)?;
        Ok(out)
    }

    /// Applies the stopping and switching rules after an event at time `t`.
    /// `w_norm` is `|W̄(t)|_1`.
    pub fn after_event(
        &mut self,
        setup: &SimSetup,
        t: f64,
        x: &[i64],
        w_norm: f64,
    ) -> Option<Transition> {
        if self.phase == Phase::PostTau {
            return None;
        }
        let eps = setup.eps_n;
        let nf = setup.n as f64;
        if setup.deviation(x) >= eps.sqrt() {
            self.tau_tilde = Some(t);
            self.phase = Phase::PostTau;
            return Some(Transition::TauTilde);
        }
        if w_norm >= eps {
            self.sigma = Some(t);
            self.phase = Phase::PostTau;
            return Some(Transition::Sigma);
        }
        match self.phase {
            Phase::Drain => {
                let drop = x.iter().sum::<i64>() - self.anchor_drain.iter().sum::<i64>();
                if drop as f64 / nf <= -7.0 * eps {
                    self.phase = Phase::Hold;
                    self.anchor_hold = x.to_vec();
                    self.zetas.push(t);
                    return Some(Transition::EnterHold);
                }
            }
            Phase::Hold => {
                let moved: i64 = x
                    .iter()
                    .zip(&self.anchor_hold)
                    .map(|(a, b)| (a - b).abs())
                    .sum();
                if moved as f64 / nf >= 3.0 * eps {
                    self.phase = Phase::Drain;
                    self.k += 1;
                    self.anchor_drain = x.to_vec();
                    self.etas.push(t);
                    return Some(Transition::EnterDrain);
                }
            }
            Phase::PostTau => {}
        }
        None
    }

    /// `sigma` fired between events, at `t`.
    pub fn fire_sigma(&mut self, t: f64) {
        if self.phase != Phase::PostTau {
            self.sigma = Some(t);
            self.phase = Phase::PostTau;
        }
    }
}

fn check_signs(a: &Assignment) -> Result<(), Infeasible> {
    let bad = |quantity: String, value: i64| Err(Infeasible { quantity, value });
    if let Some((i, &v)) = a.y.iter().enumerate().find(|(_, &v)| v < 0) {
        return bad(format!("Y[{}]", i + 1), v);
    }
    if let Some((j, &v)) = a.z.iter().enumerate().find(|(_, &v)| v < 0) {
        return bad(format!("Z[{}]", j + 1), v);
    }
    if let Some((i, j, &v)) = a.psi.iter().find(|(_, _, &v)| v < 0) {
        return bad(format!("Psi[{}][{}]", i + 1, j + 1), v);
    }
    Ok(())
}
