//! Event-driven simulation of the n-th system under the drain/hold policy.
//!
//! [`Simulation`] holds the state and applies events it is handed; it never
//! draws random numbers. [`run`] is the driver that samples the events.

use serde::Serialize;
use thiserror::Error;

use super::policy::{Assignment, Phase, Policy, SetupError, SimSetup, Transition};
use super::rng::{next_departure, stream, ArrivalKind};
use crate::matrix::{l1, Matrix};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error("epsilon regime violated at n = {n}: {quantity} = {value} at t = {t}")]
    RegimeViolated {
        n: u64,
        t: f64,
        quantity: String,
        value: i64,
        metrics: Box<RunMetrics>,
    },
    #[error("conservation broken at t = {t}: {what}")]
    Invariant { t: f64, what: String },
    #[error("departure from idle pair ({class}, {pool}) at t = {t}")]
    IdlePair { t: f64, class: usize, pool: usize },
    #[error("event at t = {t} precedes the clock {now}")]
    OutOfOrder { t: f64, now: f64 },
}

impl SimError {
    /// Metrics accumulated before a regime violation, if that is what happened.
    pub fn partial_metrics(&self) -> Option<&RunMetrics> {
        match self {
            SimError::RegimeViolated { metrics, .. } => Some(metrics),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Arrival { class: usize },
    Departure { class: usize, pool: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum LogKind {
    Event(Event),
    Phase(Transition),
}

impl LogKind {
    pub fn label(&self) -> String {
        match self {
            LogKind::Event(Event::Arrival { class }) => format!("arrival-{}", class + 1),
            LogKind::Event(Event::Departure { class, pool }) => {
                format!("departure-{}{}", class + 1, pool + 1)
            }
            LogKind::Phase(t) => format!("phase-change:{}", t.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRecord {
    pub index: u64,
    pub t: f64,
    pub kind: LogKind,
    /// Phase after the record was applied.
    pub phase: Phase,
    pub queued: i64,
    /// `|X - X0|_1` in customers.
    pub deviation: i64,
    /// Row-major in-service counts after the record, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi: Option<Vec<i64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOptions {
    pub horizon: f64,
    pub seed: u64,
    pub arrivals: ArrivalKind,
    /// Exponent in the scaled deviation `n^-rho sup|X - X0|`.
    pub rho: f64,
    pub record_log: bool,
    pub record_psi: bool,
    /// Stop after this many arrivals and departures.
    pub max_events: Option<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            seed: 0,
            arrivals: ArrivalKind::Exponential,
            rho: 0.6,
            record_log: false,
            record_psi: false,
            max_events: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunMetrics {
    pub n: u64,
    pub seed: u64,
    pub horizon: f64,
    /// Clock when the run stopped.
    pub t_end: f64,
    pub busy_time: f64,
    pub busy_fraction: f64,
    /// `sup |X - X0|_1` in customers.
    pub sup_x_dev: f64,
    pub rho: f64,
    pub scaled_sup_dev: f64,
    /// `sqrt(n) sup |W̄|_1`.
    pub sup_w_scaled: f64,
    /// Index of the last drain interval.
    pub k: usize,
    pub holds: usize,
    pub tau_tilde: Option<f64>,
    pub sigma: Option<f64>,
    pub event_count: u64,
    pub drain_events: u64,
    pub hold_events: u64,
    pub post_tau_events: u64,
}

impl RunMetrics {
    pub fn tau_fired(&self) -> bool {
        self.tau_tilde.is_some()
    }

    pub fn sigma_fired(&self) -> bool {
        self.sigma.is_some()
    }

    pub fn stopped(&self) -> bool {
        self.tau_fired() || self.sigma_fired()
    }
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub x: Vec<i64>,
    pub y: Vec<i64>,
    pub z: Vec<i64>,
    pub psi: Matrix<i64>,
    pub arrivals: Vec<i64>,
    pub departures: Matrix<i64>,
    /// `∫ Psi dt`, server-time units.
    pub busy_servers: Matrix,
}

#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    setup: &'a SimSetup,
    opts: RunOptions,
    state: SimState,
    policy: Policy,
    metrics: RunMetrics,
    log: Vec<LogRecord>,
    index: u64,
}

/// First `s` in `[0, horizon]` with `|w0 + s slope|_1 >= level`.
///
/// The norm is piecewise linear in `s` with kinks where a coordinate changes
/// sign, so walking the kinks gives the crossing exactly. The answer does not
/// depend on `horizon` beyond the final cut-off, which keeps replays bit-exact.
pub fn first_l1_crossing(w0: &[f64], slope: &[f64], horizon: f64, level: f64) -> Option<f64> {
    let at = |s: f64| -> f64 { w0.iter().zip(slope).map(|(w, d)| (w + s * d).abs()).sum() };
    let mut prev = 0.0;
    let mut f_prev = at(0.0);
    if f_prev >= level {
        return Some(0.0);
    }
    let mut kinks: Vec<f64> = w0
        .iter()
        .zip(slope)
        .filter(|(_, d)| **d != 0.0)
        .map(|(w, d)| -w / d)
        .filter(|&s| s > 0.0)
        .collect();
    kinks.sort_by(f64::total_cmp);
    let mut hit = None;
    for s in kinks {
        let f = at(s);
        if f >= level {
            hit = Some(prev + (level - f_prev) / (f - f_prev) * (s - prev));
            break;
        }
        prev = s;
        f_prev = f;
    }
    if hit.is_none() {
        // Past the last kink every coordinate keeps its sign.
        let rate: f64 = w0
            .iter()
            .zip(slope)
            .map(|(w, d)| if w + (prev + 1.0) * d >= 0.0 { *d } else { -d })
            .sum();
        if rate > 0.0 {
            hit = Some(prev + (level - f_prev) / rate);
        }
    }
    hit.filter(|&s| s <= horizon)
}

impl<'a> Simulation<'a> {
    pub fn new(setup: &'a SimSetup, opts: RunOptions) -> Result<Self, SimError> {
        let (ni, nj) = (setup.classes(), setup.pools());
        let policy = Policy::new(&setup.x0);
        let metrics = RunMetrics {
            n: setup.n,
            seed: opts.seed,
            horizon: opts.horizon,
            rho: opts.rho,
            k: 1,
            ..RunMetrics::default()
        };
        let placeholder = Assignment {
            y: vec![0; ni],
            z: vec![0; nj],
            psi: Matrix::zeros(ni, nj),
        };
        let mut sim = Self {
            setup,
            opts,
            state: SimState {
                t: 0.0,
                x: setup.x0.clone(),
                y: placeholder.y,
                z: placeholder.z,
                psi: placeholder.psi,
                arrivals: vec![0; ni],
                departures: Matrix::zeros(ni, nj),
                busy_servers: Matrix::zeros(ni, nj),
            },
            policy,
            metrics,
            log: Vec::new(),
            index: 0,
        };
        // Time-zero checks, then the first assignment.
        let w = l1(&sim.w_bar());
        sim.metrics.sup_w_scaled = (setup.n as f64).sqrt() * w;
        if let Some(tr) = sim.policy.after_event(setup, 0.0, &setup.x0, w) {
            sim.push_log(LogKind::Phase(tr));
        }
        sim.reassign()?;
        Ok(sim)
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn setup(&self) -> &SimSetup {
        self.setup
    }

    /// `X/n - x* - lambda t + sum_j mu_ij ∫Psi_ij / n`.
    pub fn w_bar(&self) -> Vec<f64> {
        let nf = self.setup.n as f64;
        (0..self.setup.classes())
            .map(|i| {
                let served: f64 = (0..self.setup.pools())
                    .map(|j| self.setup.mu[(i, j)] * self.state.busy_servers[(i, j)])
                    .sum();
                self.state.x[i] as f64 / nf
                    - self.setup.x_star[i]
                    - self.setup.lambda[i] * self.state.t
                    + served / nf
            })
            .collect()
    }

    fn w_slope(&self) -> Vec<f64> {
        let nf = self.setup.n as f64;
        (0..self.setup.classes())
            .map(|i| {
                -self.setup.lambda[i]
                    + (0..self.setup.pools())
                        .map(|j| self.setup.mu[(i, j)] * self.state.psi[(i, j)] as f64)
                        .sum::<f64>()
                        / nf
            })
            .collect()
    }

    fn push_log(&mut self, kind: LogKind) {
        if !self.opts.record_log {
            return;
        }
        let deviation = self
            .state
            .x
            .iter()
            .zip(&self.setup.x0)
            .map(|(a, b)| (a - b).abs())
            .sum();
        self.log.push(LogRecord {
            index: self.index,
            t: self.state.t,
            kind,
            phase: self.policy.phase,
            queued: self.state.y.iter().sum(),
            deviation,
            psi: self
                .opts
                .record_psi
                .then(|| self.state.psi.as_slice().to_vec()),
        });
        self.index += 1;
    }

    fn violation(&self, quantity: String, value: i64) -> SimError {
        let mut metrics = self.metrics.clone();
        self.finish_into(&mut metrics);
        SimError::RegimeViolated {
            n: self.setup.n,
            t: self.state.t,
            quantity,
            value,
            metrics: Box::new(metrics),
        }
    }

    fn reassign(&mut self) -> Result<(), SimError> {
        let a = self
            .policy
            .assign(self.setup, &self.state.x)
            .map_err(|e| self.violation(e.quantity, e.value))?;
        self.state.y = a.y;
        self.state.z = a.z;
        self.state.psi = a.psi;
        self.check_invariants()
    }

    /// Exact integer checks of the balance equations and sign constraints.
    pub fn check_invariants(&self) -> Result<(), SimError> {
        let s = &self.state;
        let fail = |what: String| Err(SimError::Invariant { t: s.t, what });
        let rows = s.psi.row_sums();
        let cols = s.psi.col_sums();
        let served = s.departures.row_sums();
        for i in 0..self.setup.classes() {
            if s.y[i] + rows[i] != s.x[i] {
                return fail(format!("queue balance of class {}", i + 1));
            }
            if s.x[i] != self.setup.x0[i] + s.arrivals[i] - served[i] {
                return fail(format!("customer count of class {}", i + 1));
            }
            if s.y[i] < 0 || s.x[i] < 0 {
                return fail(format!("negative count in class {}", i + 1));
            }
        }
        for (j, (&z, &servers)) in s.z.iter().zip(&self.setup.servers).enumerate() {
            if z + cols[j] != servers || z < 0 {
                return fail(format!("server balance of pool {}", j + 1));
            }
        }
        for (i, j, &p) in s.psi.iter() {
            if p < 0 || (p > 0 && self.setup.mu[(i, j)] <= 0.0) {
                return fail(format!("in-service count at ({}, {})", i + 1, j + 1));
            }
        }
        Ok(())
    }

    fn accumulate_to(&mut self, t: f64) {
        let dt = t - self.state.t;
        if dt <= 0.0 {
            return;
        }
        if self.state.y.iter().sum::<i64>() > 0 {
            self.metrics.busy_time += dt;
        }
        for (acc, &p) in self
            .state
            .busy_servers
            .as_mut_slice()
            .iter_mut()
            .zip(self.state.psi.as_slice())
        {
            *acc += p as f64 * dt;
        }
        self.state.t = t;
        self.note_w();
    }

    fn note_w(&mut self) {
        let w = (self.setup.n as f64).sqrt() * l1(&self.w_bar());
        self.metrics.sup_w_scaled = self.metrics.sup_w_scaled.max(w);
    }

    /// Moves the clock to `t`, stopping early if `|W̄|` reaches `eps_n` first.
    /// Returns the crossing time in that case.
    pub fn advance(&mut self, t: f64) -> Result<Option<f64>, SimError> {
        if t < self.state.t {
            return Err(SimError::OutOfOrder {
                t,
                now: self.state.t,
            });
        }
        let dt = t - self.state.t;
        if self.policy.phase != Phase::PostTau {
            let w0 = self.w_bar();
            let slope = self.w_slope();
            if let Some(s) = first_l1_crossing(&w0, &slope, dt, self.setup.eps_n) {
                if s < dt {
                    self.accumulate_to(self.state.t + s);
                    let now = self.state.t;
                    self.policy.fire_sigma(now);
                    self.reassign()?;
                    self.push_log(LogKind::Phase(Transition::Sigma));
                    return Ok(Some(now));
                }
            }
        }
        self.accumulate_to(t);
        Ok(None)
    }

    /// Applies an arrival or departure at the current clock.
    pub fn apply(&mut self, event: Event) -> Result<(), SimError> {
        match event {
            Event::Arrival { class } => {
                self.state.x[class] += 1;
                self.state.arrivals[class] += 1;
            }
            Event::Departure { class, pool } => {
                if self.state.psi[(class, pool)] <= 0 {
                    return Err(SimError::IdlePair {
                        t: self.state.t,
                        class,
                        pool,
                    });
                }
                self.state.x[class] -= 1;
                self.state.departures[(class, pool)] += 1;
            }
        }
        self.metrics.event_count += 1;
        match self.policy.phase {
            Phase::Drain => self.metrics.drain_events += 1,
            Phase::Hold => self.metrics.hold_events += 1,
            Phase::PostTau => self.metrics.post_tau_events += 1,
        }
        let dev: i64 = self
            .state
            .x
            .iter()
            .zip(&self.setup.x0)
            .map(|(a, b)| (a - b).abs())
            .sum();
        self.metrics.sup_x_dev = self.metrics.sup_x_dev.max(dev as f64);
        self.note_w();
        let w = l1(&self.w_bar());
        let transition = self
            .policy
            .after_event(self.setup, self.state.t, &self.state.x, w);
        self.reassign()?;
        self.push_log(LogKind::Event(event));
        if let Some(tr) = transition {
            self.push_log(LogKind::Phase(tr));
        }
        Ok(())
    }

    fn finish_into(&self, m: &mut RunMetrics) {
        m.t_end = self.state.t;
        m.busy_fraction = if m.horizon > 0.0 {
            m.busy_time / m.horizon
        } else {
            0.0
        };
        m.scaled_sup_dev = (m.n as f64).powf(-m.rho) * m.sup_x_dev;
        m.k = self.policy.k;
        m.holds = self.policy.zetas.len();
        m.tau_tilde = self.policy.tau_tilde;
        m.sigma = self.policy.sigma;
    }

    pub fn metrics(&self) -> RunMetrics {
        let mut m = self.metrics.clone();
        self.finish_into(&mut m);
        m
    }

    pub fn into_output(self) -> RunOutput {
        let metrics = self.metrics();
        RunOutput {
            metrics,
            policy: self.policy,
            log: self.log,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub policy: Policy,
    pub log: Vec<LogRecord>,
}

/// Simulates until the horizon (or `max_events`), sampling arrivals from
/// per-class streams and services from their own stream.
pub fn run(setup: &SimSetup, opts: RunOptions) -> Result<RunOutput, SimError> {
    let ni = setup.classes();
    let horizon = opts.horizon;
    let kind = opts.arrivals;
    let max_events = opts.max_events.unwrap_or(u64::MAX);
    let mut arrival_rngs: Vec<_> = (0..ni).map(|i| stream(opts.seed, i as u64)).collect();
    let mut service_rng = stream(opts.seed, ni as u64);
    let mut next_arrival: Vec<f64> = (0..ni)
        .map(|i| kind.interarrival(setup.lambda_n[i], &mut arrival_rngs[i]))
        .collect();
    let mut sim = Simulation::new(setup, opts)?;
    let mut events = 0u64;
    while events < max_events {
        let now = sim.state.t;
        let departure = next_departure(&setup.mu, &sim.state.psi, &mut service_rng);
        let (class, t_arr) = next_arrival
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one class");
        let t_dep = departure.map_or(f64::INFINITY, |d| now + d.dt);
        let t_next = t_arr.min(t_dep);
        if t_next >= horizon {
            if sim.advance(horizon)?.is_some() {
                continue;
            }
            break;
        }
        if sim.advance(t_next)?.is_some() {
            // Service rates changed; the pending completion is resampled.
            continue;
        }
        if t_arr <= t_dep {
            sim.apply(Event::Arrival { class })?;
            next_arrival[class] +=
                kind.interarrival(setup.lambda_n[class], &mut arrival_rngs[class]);
        } else {
            let d = departure.expect("finite departure time");
            sim.apply(Event::Departure {
                class: d.class,
                pool: d.pool,
            })?;
        }
        events += 1;
    }
    Ok(sim.into_output())
}

/// Feeds a recorded log back through a fresh simulation and returns the
/// records it produces. Phase-change entries are regenerated, not replayed.
pub fn replay(
    setup: &SimSetup,
    opts: RunOptions,
    log: &[LogRecord],
) -> Result<Vec<LogRecord>, SimError> {
    let horizon = opts.horizon;
    let max_events = opts.max_events.unwrap_or(u64::MAX);
    let mut sim = Simulation::new(setup, opts)?;
    let mut events = 0u64;
    for rec in log {
        if let LogKind::Event(e) = rec.kind {
            while sim.advance(rec.t)?.is_some() {}
            sim.apply(e)?;
            events += 1;
        }
    }
    // A run cut off by the event cap never walked on to the horizon.
    if events < max_events {
        while sim.advance(horizon)?.is_some() {}
    }
    Ok(sim.log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_through_a_kink() {
        // |1 - s| + |s| is flat at 1 on [0, 1], then rises with slope 2.
        let s = first_l1_crossing(&[1.0, 0.0], &[-1.0, 1.0], 5.0, 2.0).unwrap();
        assert!((s - 1.5).abs() < 1e-15);
        assert!(first_l1_crossing(&[1.0, 0.0], &[-1.0, 1.0], 1.2, 2.0).is_none());
        assert_eq!(first_l1_crossing(&[3.0], &[0.0], 1.0, 2.0), Some(0.0));
    }
}
