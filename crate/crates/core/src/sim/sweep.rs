//! Replicated runs over a list of scales, with per-scale summaries.

use serde::Serialize;

use super::engine::{run, RunMetrics, RunOptions, SimError};
use super::policy::SimSetup;
use super::rng::{derive_seed, ArrivalKind};
use crate::allocation::StaticAllocation;
use crate::fluid::constants::FluidConstants;
use crate::network::{scale_system, NetworkSpec};
use crate::paths::SimplePath;

#[derive(Debug, Clone, Serialize)]
pub struct SweepConfig {
    pub n_list: Vec<u64>,
    pub reps: u64,
    pub horizon: f64,
    pub base_seed: u64,
    pub rho: f64,
    pub arrivals: ArrivalKind,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub n: u64,
    pub rep: u64,
    pub seed: u64,
    /// Full metrics for completed runs, partial ones for regime violations.
    pub metrics: Option<RunMetrics>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn completed(&self) -> Option<&RunMetrics> {
        if self.error.is_none() {
            self.metrics.as_ref()
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    /// `NaN` everywhere for an empty sample.
    pub fn of(values: &[f64]) -> Self {
        Self {
            q1: quantile(values, 0.25),
            median: quantile(values, 0.5),
            q3: quantile(values, 0.75),
        }
    }
}

/// Linear-interpolation quantile (the usual "type 7").
pub fn quantile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleSummary {
    pub n: u64,
    pub runs: usize,
    pub completed: usize,
    pub errors: usize,
    /// Over completed runs.
    pub busy_fraction: Quartiles,
    /// Over completed runs.
    pub scaled_sup_dev: Quartiles,
    /// Fraction of completed runs in which either stopping time fired.
    pub fired_fraction: f64,
    /// 95th percentile of `sqrt(n) sup|W̄|` over completed runs.
    pub w_p95: f64,
    /// Same, also counting runs cut short by a regime violation (their sup
    /// only covers the time before the violation).
    pub w_p95_partial: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
    pub summaries: Vec<ScaleSummary>,
}

fn one_run(setup: &Result<SimSetup, String>, n: u64, rep: u64, cfg: &SweepConfig) -> SweepRow {
    let seed = derive_seed(cfg.base_seed, n, rep);
    let row = |metrics, error| SweepRow {
        n,
        rep,
        seed,
        metrics,
        error,
    };
    let setup = match setup {
        Ok(s) => s,
        Err(e) => return row(None, Some(e.clone())),
    };
    let opts = RunOptions {
        horizon: cfg.horizon,
        seed,
        arrivals: cfg.arrivals,
        rho: cfg.rho,
        ..RunOptions::default()
    };
    match run(setup, opts) {
        Ok(out) => row(Some(out.metrics), None),
        Err(e) => {
            let partial = e.partial_metrics().cloned();
            row(partial, Some(e.to_string()))
        }
    }
}

pub fn summarize(n: u64, rows: &[&SweepRow]) -> ScaleSummary {
    let done: Vec<&RunMetrics> = rows.iter().filter_map(|r| r.completed()).collect();
    let busy: Vec<f64> = done.iter().map(|m| m.busy_fraction).collect();
    let dev: Vec<f64> = done.iter().map(|m| m.scaled_sup_dev).collect();
    let fired = done.iter().filter(|m| m.stopped()).count();
    let w: Vec<f64> = done.iter().map(|m| m.sup_w_scaled).collect();
    let w_partial: Vec<f64> = rows
        .iter()
        .filter_map(|r| r.metrics.as_ref())
        .map(|m| m.sup_w_scaled)
        .collect();
    ScaleSummary {
        n,
        runs: rows.len(),
        completed: done.len(),
        errors: rows.iter().filter(|r| r.error.is_some()).count(),
        busy_fraction: Quartiles::of(&busy),
        scaled_sup_dev: Quartiles::of(&dev),
        fired_fraction: if done.is_empty() {
            f64::NAN
        } else {
            fired as f64 / done.len() as f64
        },
        w_p95: quantile(&w, 0.95),
        w_p95_partial: quantile(&w_partial, 0.95),
    }
}

/// Runs `reps` replications at every `n`. Per-run failures become rows.
pub fn sweep(
    spec: &NetworkSpec,
    alloc: &StaticAllocation,
    constants: &FluidConstants,
    witness: &SimplePath,
    cfg: &SweepConfig,
) -> SweepTable {
    let setups: Vec<Result<SimSetup, String>> = cfg
        .n_list
        .iter()
        .map(|&n| {
            let sys = scale_system(spec, &alloc.x_star, n).map_err(|e| e.to_string())?;
            SimSetup::new(&sys, spec, alloc, constants, witness)
                .map_err(|e| SimError::from(e).to_string())
        })
        .collect();
    let jobs: Vec<(usize, u64)> = (0..cfg.n_list.len())
        .flat_map(|k| (0..cfg.reps).map(move |r| (k, r)))
        .collect();
    let work = |&(k, rep): &(usize, u64)| one_run(&setups[k], cfg.n_list[k], rep, cfg);
    #[cfg(feature = "parallel")]
    let rows: Vec<SweepRow> = {
        use rayon::prelude::*;
        jobs.par_iter().map(work).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<SweepRow> = jobs.iter().map(work).collect();
    let summaries = cfg
        .n_list
        .iter()
        .map(|&n| {
            let mine: Vec<&SweepRow> = rows.iter().filter(|r| r.n == n).collect();
            summarize(n, &mine)
        })
        .collect();
    SweepTable {
        config: cfg.clone(),
        rows,
        summaries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert!(quantile(&[], 0.5).is_nan());
        assert_eq!(Quartiles::of(&[7.0]).q3, 7.0);
    }
}
