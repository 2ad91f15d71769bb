//! Drain/hold fluid trajectory under a piecewise-linear perturbation.
//!
//! Drain pieces are affine in time and are solved in closed form; hold pieces
//! use explicit Euler on the piecewise-affine right-hand side. Pieces never
//! straddle a breakpoint of `W`, so `X` is linear on each piece and every
//! stopping rule can be located on the piece directly.

use serde::Serialize;
use thiserror::Error;

use super::perturbation::Perturbation;
use super::tree::TreeSolver;
use crate::allocation::StaticAllocation;
use crate::matrix::{l1_diff, Matrix};
use crate::network::NetworkSpec;

/// Tolerance on the sign constraints before a state counts as infeasible.
pub const NONNEG_TOL: f64 = 1e-12;
/// A queue counts as non-empty above this total.
pub const BUSY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FluidError {
    #[error("epsilon regime violated at t = {t}: {quantity} = {value}")]
    RegimeViolated {
        t: f64,
        quantity: String,
        value: f64,
    },
    #[error("invalid trajectory options: {0}")]
    Options(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Drain,
    Hold,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Drain => "drain",
            Phase::Hold => "hold",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalEnd {
    /// Drain reached the `-7 eps` drop, or hold drifted `3 eps`.
    Threshold,
    /// Distance from `x*` reached `sqrt(eps)`.
    Tau,
    Sigma,
}

#[derive(Debug, Clone, Serialize)]
pub struct Interval {
    pub k: usize,
    pub phase: Phase,
    pub start: f64,
    pub end: f64,
    pub ended_by: IntervalEnd,
    /// Largest total queue seen inside the interval.
    pub max_queue: f64,
}

impl Interval {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub psi: Matrix,
    pub phase: Phase,
    pub k: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FluidTrajectory {
    pub eps: f64,
    pub sigma: f64,
    pub tau: f64,
    pub tau_tilde: Option<f64>,
    /// Entry times into hold.
    pub zetas: Vec<f64>,
    /// Entry times back into drain.
    pub etas: Vec<f64>,
    pub intervals: Vec<Interval>,
    #[serde(skip)]
    pub samples: Vec<Sample>,
    /// End of the window `[0, sigma ∧ gamma2 ∧ tau]` used by the bounds.
    pub window: f64,
    pub busy_measure: f64,
    pub sup_dev: f64,
    /// Busy time over all of `[0, tau]`.
    pub busy_total: f64,
    pub sup_dev_total: f64,
    /// Number of hold intervals entered before stopping.
    pub k_count: usize,
    /// `nu + theta`.
    pub capacity: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct TrajectoryOptions {
    pub i0: usize,
    pub j0: usize,
    pub step: f64,
    /// End of the bound window before truncation by `tau`; usually `gamma2(eps)`.
    pub window: f64,
}

impl TrajectoryOptions {
    pub fn default_step(eps: f64) -> f64 {
        (1e-3f64).min(eps / 10.0)
    }
}

struct Integrator<'a> {
    spec: &'a NetworkSpec,
    x_star: &'a [f64],
    psi_tilde: &'a Matrix,
    solver: TreeSolver,
    pert: &'a Perturbation,
    opts: TrajectoryOptions,
    out: FluidTrajectory,
    capacity: Vec<f64>,
}

/// Runs the drain/hold construction from `X(0) = x* + W(0)` until
/// `tau = tau_tilde ∧ sigma`.
pub fn integrate_trajectory(
    spec: &NetworkSpec,
    alloc: &StaticAllocation,
    psi_tilde: &Matrix,
    pert: &Perturbation,
    opts: TrajectoryOptions,
) -> Result<FluidTrajectory, FluidError> {
    if opts.step.is_nan() || opts.step <= 0.0 {
        return Err(FluidError::Options(format!(
            "step must be positive, got {}",
            opts.step
        )));
    }
    if opts.i0 >= spec.classes() || opts.j0 >= spec.pools() {
        return Err(FluidError::Options("i0/j0 out of range".into()));
    }
    if pert.classes() != spec.classes() || pert.theta().len() != spec.pools() {
        return Err(FluidError::Options(
            "perturbation dimensions do not match network".into(),
        ));
    }
    let capacity: Vec<f64> = spec
        .nu()
        .iter()
        .zip(pert.theta())
        .map(|(v, t)| v + t)
        .collect();
    let mut it = Integrator {
        spec,
        x_star: &alloc.x_star,
        psi_tilde,
        solver: TreeSolver::new(&alloc.tree),
        pert,
        opts,
        out: FluidTrajectory {
            eps: pert.eps(),
            sigma: pert.sigma(),
            tau: pert.sigma(),
            tau_tilde: None,
            zetas: Vec::new(),
            etas: Vec::new(),
            intervals: Vec::new(),
            samples: Vec::new(),
            window: opts.window.min(pert.sigma()),
            busy_measure: 0.0,
            sup_dev: 0.0,
            busy_total: 0.0,
            sup_dev_total: 0.0,
            k_count: 0,
            capacity: capacity.clone(),
        },
        capacity,
    };
    it.run()?;
    Ok(it.out)
}

fn lerp(a: &[f64], b: &[f64], u: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + u * (y - x)).collect()
}

/// Smallest `u` in `[0, 1]` with `f0 + u (f1 - f0) <= level`, given `f0 > level`.
fn linear_drop(f0: f64, f1: f64, level: f64) -> Option<f64> {
    if f1 > level {
        return None;
    }
    Some(((f0 - level) / (f0 - f1)).clamp(0.0, 1.0))
}

/// First `u` where the convex function `g(u) = |x(u) - c|_1` reaches `level`,
/// `x` linear from `x0` to `x1`, assuming `g(0) < level`.
fn convex_exit(x0: &[f64], x1: &[f64], c: &[f64], level: f64, resolution: f64) -> Option<f64> {
    if l1_diff(x1, c) < level {
        return None;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        if l1_diff(&lerp(x0, x1, mid), c) >= level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Measure of `{s in [0, len] : f(s) > BUSY_TOL}` for affine `f` from `f0` to `f1`.
fn positive_measure(f0: f64, f1: f64, len: f64) -> f64 {
    match (f0 > BUSY_TOL, f1 > BUSY_TOL) {
        (true, true) => len,
        (false, false) => 0.0,
        (a, _) => {
            let u = (BUSY_TOL - f0) / (f1 - f0);
            if a {
                u * len
            } else {
                (1.0 - u) * len
            }
        }
    }
}

enum Stop {
    Continue,
    Switch,
    Tau,
    Sigma,
}

impl Integrator<'_> {
    fn classes(&self) -> usize {
        self.spec.classes()
    }

    fn eps(&self) -> f64 {
        self.pert.eps()
    }

    fn violation(t: f64, quantity: String, value: f64) -> FluidError {
        FluidError::RegimeViolated { t, quantity, value }
    }

    /// End of the current piece: next step, next W breakpoint, or sigma.
    fn piece_end(&self, t: f64) -> f64 {
        let mut end = (t + self.opts.step).min(self.pert.sigma());
        if let Some(b) = self.pert.next_breakpoint(t) {
            end = end.min(b);
        }
        end
    }

    fn drain_state(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let y: Vec<f64> = x
            .iter()
            .zip(self.psi_tilde.row_sums())
            .map(|(x, r)| x - r)
            .collect();
        let z: Vec<f64> = self
            .capacity
            .iter()
            .zip(self.psi_tilde.col_sums())
            .map(|(c, s)| c - s)
            .collect();
        (y, z)
    }

    fn hold_state(&self, x: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>, Matrix), FluidError> {
        let excess: f64 = x.iter().sum::<f64>() - self.capacity.iter().sum::<f64>();
        let mut y = vec![0.0; self.classes()];
        let mut z = vec![0.0; self.spec.pools()];
        y[self.opts.i0] = excess.max(0.0);
        z[self.opts.j0] = (-excess).max(0.0);
        let a: Vec<f64> = x.iter().zip(&y).map(|(x, y)| x - y).collect();
        let b: Vec<f64> = self.capacity.iter().zip(&z).map(|(c, z)| c - z).collect();
        let psi = self
            .solver
            .solve(&a, &b)
            .map_err(|e| Self::violation(t, format!("tree balance ({e})"), excess))?;
        if let Some((i, j, &v)) = psi.iter().find(|(_, _, &v)| v < -NONNEG_TOL) {
            return Err(Self::violation(
                t,
                format!("Psi[{}][{}] in hold", i + 1, j + 1),
                v,
            ));
        }
        Ok((y, z, psi))
    }

    fn drift(&self, psi: &Matrix) -> Vec<f64> {
        (0..self.classes())
            .map(|i| {
                self.spec.lambda()[i]
                    - (0..self.spec.pools())
                        .map(|j| self.spec.mu()[(i, j)] * psi[(i, j)])
                        .sum::<f64>()
            })
            .collect()
    }

    fn record(&mut self, sample: Sample) {
        self.out.samples.push(sample);
    }

    /// Accumulates busy time and deviation over a piece where `X` is linear and
    /// the queue indicator is driven by the affine `queue0 -> queue1`.
    fn account(&mut self, t0: f64, t1: f64, x0: &[f64], x1: &[f64], queue0: f64, queue1: f64) {
        let len = t1 - t0;
        if len <= 0.0 {
            return;
        }
        self.out.busy_total += positive_measure(queue0, queue1, len);
        let d0 = l1_diff(x0, self.x_star);
        let d1 = l1_diff(x1, self.x_star);
        self.out.sup_dev_total = self.out.sup_dev_total.max(d0).max(d1);
        let w = self.out.window;
        if t0 < w {
            let u = ((w - t0) / len).min(1.0);
            let q_end = queue0 + u * (queue1 - queue0);
            self.out.busy_measure += positive_measure(queue0, q_end, u * len);
            let dw = l1_diff(&lerp(x0, x1, u), self.x_star);
            self.out.sup_dev = self.out.sup_dev.max(d0).max(dw);
        }
    }

    fn run(&mut self) -> Result<(), FluidError> {
        let eps = self.eps();
        let root = eps.sqrt();
        let mut t = 0.0;
        let mut x: Vec<f64> = self
            .x_star
            .iter()
            .zip(self.pert.at(0.0))
            .map(|(a, w)| a + w)
            .collect();
        self.out.sup_dev = l1_diff(&x, self.x_star);
        self.out.sup_dev_total = self.out.sup_dev;
        let mut phase = Phase::Drain;
        let mut k = 1;
        let mut anchor = x.clone();
        let mut start = 0.0;
        let mut max_queue: f64 = 0.0;

        if let Some((i, j, &v)) = self.psi_tilde.iter().find(|(_, _, &v)| v < 0.0) {
            return Err(Self::violation(
                0.0,
                format!("drain Psi[{}][{}]", i + 1, j + 1),
                v,
            ));
        }
        let drain_drift = self.drift(self.psi_tilde);
        let (y0, z0) = self.drain_state(&x);
        self.record(Sample {
            t: 0.0,
            x: x.clone(),
            y: y0,
            z: z0,
            psi: self.psi_tilde.clone(),
            phase,
            k,
        });

        loop {
            let t1 = self.piece_end(t);
            let w0 = self.pert.at(t);
            let w1 = self.pert.at(t1);
            let h = t1 - t;
            let (x1, drift_used) = match phase {
                Phase::Drain => {
                    let x1: Vec<f64> = (0..self.classes())
                        .map(|i| x[i] + w1[i] - w0[i] + h * drain_drift[i])
                        .collect();
                    (x1, drain_drift.clone())
                }
                Phase::Hold => {
                    let (_, _, psi) = self.hold_state(&x, t)?;
                    let f = self.drift(&psi);
                    let x1: Vec<f64> = (0..self.classes())
                        .map(|i| x[i] + w1[i] - w0[i] + h * f[i])
                        .collect();
                    (x1, f)
                }
            };
            let _ = drift_used;

            // Candidate stopping points as fractions of the piece.
            let mut cut = 1.0;
            let mut stop = if t1 >= self.pert.sigma() {
                Stop::Sigma
            } else {
                Stop::Continue
            };
            let resolution = match phase {
                Phase::Drain => 1e-14,
                // Finer than a hundredth of a step.
                Phase::Hold => 1e-5,
            };
            if let Some(u) = convex_exit(&x, &x1, self.x_star, root, resolution) {
                cut = u;
                stop = Stop::Tau;
            }
            let switch = match phase {
                Phase::Drain => {
                    let e0: f64 = x.iter().sum::<f64>() - anchor.iter().sum::<f64>();
                    let e1: f64 = x1.iter().sum::<f64>() - anchor.iter().sum::<f64>();
                    linear_drop(e0, e1, -7.0 * eps)
                }
                Phase::Hold => convex_exit(&x, &x1, &anchor, 3.0 * eps, resolution),
            };
            if let Some(u) = switch {
                if u < cut || (u == cut && !matches!(stop, Stop::Tau)) {
                    cut = u;
                    stop = Stop::Switch;
                }
            }
            let t_end = t + cut * h;
            let x_end = lerp(&x, &x1, cut);

            // Feasibility and accounting on [t, t_end].
            let capacity_total: f64 = self.capacity.iter().sum();
            let (queue0, queue1) = match phase {
                Phase::Drain => {
                    let (y_start, z_start) = self.drain_state(&x);
                    let (y_end, _) = self.drain_state(&x_end);
                    for (i, (a, b)) in y_start.iter().zip(&y_end).enumerate() {
                        let v = a.min(*b);
                        if v < -NONNEG_TOL {
                            let at = if *b < *a { t_end } else { t };
                            return Err(Self::violation(at, format!("Y[{}] in drain", i + 1), v));
                        }
                    }
                    if let Some((j, &v)) =
                        z_start.iter().enumerate().find(|(_, &v)| v < -NONNEG_TOL)
                    {
                        return Err(Self::violation(t, format!("Z[{}] in drain", j + 1), v));
                    }
                    (y_start.iter().sum(), y_end.iter().sum())
                }
                Phase::Hold => (
                    x.iter().sum::<f64>() - capacity_total,
                    x_end.iter().sum::<f64>() - capacity_total,
                ),
            };
            max_queue = max_queue.max(queue0.max(0.0)).max(queue1.max(0.0));
            self.account(t, t_end, &x.clone(), &x_end, queue0, queue1);
            t = t_end;
            x = x_end;

            match phase {
                Phase::Drain => {
                    let (y, z) = self.drain_state(&x);
                    self.record(Sample {
                        t,
                        x: x.clone(),
                        y,
                        z,
                        psi: self.psi_tilde.clone(),
                        phase,
                        k,
                    });
                }
                Phase::Hold => {
                    let (y, z, psi) = self.hold_state(&x, t)?;
                    self.record(Sample {
                        t,
                        x: x.clone(),
                        y,
                        z,
                        psi,
                        phase,
                        k,
                    });
                }
            }

            let ended_by = match stop {
                Stop::Continue => continue,
                Stop::Switch => IntervalEnd::Threshold,
                Stop::Tau => IntervalEnd::Tau,
                Stop::Sigma => IntervalEnd::Sigma,
            };
            self.out.intervals.push(Interval {
                k,
                phase,
                start,
                end: t,
                ended_by,
                max_queue,
            });
            start = t;
            max_queue = 0.0;
            match ended_by {
                IntervalEnd::Threshold => {
                    anchor = x.clone();
                    match phase {
                        Phase::Drain => {
                            self.out.zetas.push(t);
                            self.out.k_count += 1;
                            phase = Phase::Hold;
                        }
                        Phase::Hold => {
                            self.out.etas.push(t);
                            k += 1;
                            phase = Phase::Drain;
                        }
                    }
                    match phase {
                        Phase::Drain => {
                            let (y, z) = self.drain_state(&x);
                            self.record(Sample {
                                t,
                                x: x.clone(),
                                y,
                                z,
                                psi: self.psi_tilde.clone(),
                                phase,
                                k,
                            });
                        }
                        Phase::Hold => {
                            let (y, z, psi) = self.hold_state(&x, t)?;
                            self.record(Sample {
                                t,
                                x: x.clone(),
                                y,
                                z,
                                psi,
                                phase,
                                k,
                            });
                        }
                    }
                }
                IntervalEnd::Tau => {
                    self.out.tau_tilde = Some(t);
                    self.out.tau = t;
                    break;
                }
                IntervalEnd::Sigma => {
                    self.out.tau = self.pert.sigma();
                    break;
                }
            }
        }
        self.out.window = self.out.window.min(self.out.tau);
        Ok(())
    }
}
