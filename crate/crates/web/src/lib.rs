//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes a network document as JSON text and returns JSON text.
//! The plain functions below do the work so they can be tested natively.

use serde_json::{json, Value};
use subopt_core::fluid::{
    build_psi_tilde, integrate_trajectory, verify_theorem3, Perturbation, PerturbationKind,
    TrajectoryOptions,
};
use subopt_core::network::{builtin_example, scale_system, NetworkDocument};
use subopt_core::sim::{run, RunOptions, SimError, SimSetup};
use subopt_core::{analyze_document, report, Analysis};
use wasm_bindgen::prelude::*;

/// Most points sent back for one chart.
const MAX_POINTS: usize = 400;
/// Keeps a browser tab responsive.
const MAX_EVENTS: u64 = 2_000_000;

fn load(network: &str) -> Result<Analysis, String> {
    let doc = NetworkDocument::parse(network).map_err(|e| e.to_string())?;
    analyze_document(&doc).map_err(|e| e.to_string())
}

/// Built-in network `id` as an editable document.
pub fn builtin_text(id: u32) -> Result<String, String> {
    let spec = builtin_example(id).map_err(|e| e.to_string())?;
    Ok(spec.to_json())
}

pub fn analyze_text(network: &str) -> Result<String, String> {
    let a = load(network)?;
    Ok(report::analysis_json(&a).to_string())
}

pub fn fluid_text(network: &str, eps: f64, pert: &str) -> Result<String, String> {
    let a = load(network)?;
    let constants = a.constants().map_err(|e| e.to_string())?;
    let witness = a.witness().map_err(|e| e.to_string())?;
    let (ni, nj) = (a.spec.classes(), a.spec.pools());
    let sigma = 1.0;
    let kind: PerturbationKind = pert.parse()?;
    let step = TrajectoryOptions::default_step(eps);
    let pert = match kind {
        PerturbationKind::Zero => Perturbation::zero(ni, nj, eps, sigma),
        PerturbationKind::Sinusoid => Perturbation::sinusoid(ni, nj, eps, sigma, sigma / 20.0, 32),
        PerturbationKind::RandomWalk => {
            Perturbation::random_walk(ni, nj, eps, sigma, 10.0 * step, eps, 1)
        }
    }
    .map_err(|e| e.to_string())?;
    let psi = build_psi_tilde(&a.alloc, &constants, witness, &a.spec, None, eps)
        .map_err(|e| e.to_string())?;
    let opts = TrajectoryOptions {
        i0: 0,
        j0: 0,
        step,
        window: constants.gamma2(eps),
    };
    let traj =
        integrate_trajectory(&a.spec, &a.alloc, &psi, &pert, opts).map_err(|e| e.to_string())?;
    let bounds = verify_theorem3(&traj, &constants, eps);
    let stride = traj.samples.len().div_ceil(MAX_POINTS).max(1);
    let points: Vec<Value> = traj
        .samples
        .iter()
        .step_by(stride)
        .chain(traj.samples.last())
        .map(|s| {
            let dev: f64 = s.x.iter().zip(&a.alloc.x_star).map(|(x, y)| (x - y).abs()).sum();
            json!({ "t": s.t, "queued": s.y.iter().sum::<f64>(), "dev": dev, "phase": s.phase.as_str() })
        })
        .collect();
    Ok(json!({
        "tau": traj.tau,
        "tau_tilde": traj.tau_tilde,
        "holds": traj.k_count,
        "busy_total": traj.busy_total,
        "gamma1": constants.gamma1(eps),
        "passed": bounds.passed(),
        "checks": bounds.checks,
        "points": points,
    })
    .to_string())
}

pub fn simulate_text(network: &str, n: u64, horizon: f64, seed: u64) -> Result<String, String> {
    let a = load(network)?;
    let constants = a.constants().map_err(|e| e.to_string())?;
    let witness = a.witness().map_err(|e| e.to_string())?;
    let sys = scale_system(&a.spec, &a.alloc.x_star, n).map_err(|e| e.to_string())?;
    let setup =
        SimSetup::new(&sys, &a.spec, &a.alloc, &constants, witness).map_err(|e| e.to_string())?;
    let opts = RunOptions {
        horizon,
        seed,
        record_log: true,
        max_events: Some(MAX_EVENTS),
        ..RunOptions::default()
    };
    let (metrics, log, error) = match run(&setup, opts) {
        Ok(out) => (out.metrics, out.log, None),
        Err(e @ SimError::RegimeViolated { .. }) => {
            let m = e.partial_metrics().cloned().unwrap_or_default();
            (m, Vec::new(), Some(e.to_string()))
        }
        Err(e) => return Err(e.to_string()),
    };
    let stride = log.len().div_ceil(MAX_POINTS).max(1);
    let points: Vec<Value> = log
        .iter()
        .step_by(stride)
        .map(|r| json!({ "t": r.t, "queued": r.queued, "dev": r.deviation, "phase": r.phase.as_str() }))
        .collect();
    Ok(json!({ "metrics": metrics, "error": error, "points": points }).to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn builtin(id: u32) -> Result<String, JsError> {
    js(builtin_text(id))
}

#[wasm_bindgen]
pub fn analyze(network: &str) -> Result<String, JsError> {
    js(analyze_text(network))
}

#[wasm_bindgen]
pub fn fluid(network: &str, eps: f64, pert: &str) -> Result<String, JsError> {
    js(fluid_text(network, eps, pert))
}

#[wasm_bindgen]
pub fn simulate(network: &str, n: u64, horizon: f64, seed: u64) -> Result<String, JsError> {
    js(simulate_text(network, n, horizon, seed))
}
