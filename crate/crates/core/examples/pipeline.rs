//! Walks one network through every stage: static allocation, verdict, fluid
//! constants, a fluid trajectory and a stochastic run.
//!
//! `cargo run --release -p subopt-core --example pipeline`

use subopt_core::fluid::{build_psi_tilde, integrate_trajectory, Perturbation, TrajectoryOptions};
use subopt_core::network::{scale_system, NetworkSpec};
use subopt_core::sim::{run, RunOptions, SimSetup};
use subopt_core::{analyze, Matrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Two classes, two pools; pool 2 serves class 1 ten times faster than pool 1 does.
    let mu = Matrix::from_rows(&[vec![1.0, 10.0], vec![0.08, 1.0]]).ok_or("ragged rates")?;
    let spec = NetworkSpec::new(vec![5.5, 0.5], vec![0.5, 1.0], mu)?;

    let a = analyze(&spec)?;
    let witness = a.witness()?;
    println!(
        "tree {:?}, x* = {:?}",
        a.alloc.basic_edges(),
        a.alloc.x_star
    );
    println!("witness {} with weight {}", witness.label(), witness.weight);

    let c = a.constants()?;
    let eps = 1e-3;
    let psi = build_psi_tilde(&a.alloc, &c, witness, &spec, None, eps)?;
    let pert = Perturbation::zero(2, 2, eps, 1.0)?;
    let opts = TrajectoryOptions {
        i0: 0,
        j0: 0,
        step: TrajectoryOptions::default_step(eps),
        window: c.gamma2(eps),
    };
    let traj = integrate_trajectory(&spec, &a.alloc, &psi, &pert, opts)?;
    println!(
        "fluid eps = {eps}: {} holds, tau = {:.5}, busy on window {:.3e} (gamma1 {:.3})",
        traj.k_count,
        traj.tau,
        traj.busy_measure,
        c.gamma1(eps)
    );

    for n in [1_000_000u64, 4_000_000] {
        let sys = scale_system(&spec, &a.alloc.x_star, n)?;
        let setup = SimSetup::new(&sys, &spec, &a.alloc, &c, witness)?;
        let started = std::time::Instant::now();
        let opts = RunOptions {
            seed: 1,
            max_events: Some(3_000_000),
            ..RunOptions::default()
        };
        match run(&setup, opts) {
            Ok(out) => {
                let m = out.metrics;
                println!(
                    "n = {n}: stopped at t = {:.4}, K = {}, tau_tilde {:?}, events drain/hold/after {}/{}/{} in {:.2?}",
                    m.t_end,
                    m.k,
                    m.tau_tilde,
                    m.drain_events,
                    m.hold_events,
                    m.post_tau_events,
                    started.elapsed()
                );
            }
            Err(e) => println!("n = {n}: {e}"),
        }
    }
    Ok(())
}
