//! Fluid trajectories: bookkeeping identities, hold emptiness, regime errors.

mod common;

use subopt_core::fluid::{
    build_psi_tilde, integrate_trajectory, verify_theorem3, FluidError, FluidTrajectory,
    Perturbation, Phase, TrajectoryOptions,
};
use subopt_core::network::builtin_example;

use common::{fast_drain_network, prepare, Prepared};

fn trajectory(p: &Prepared, pert: &Perturbation) -> Result<FluidTrajectory, FluidError> {
    let eps = pert.eps();
    let psi = build_psi_tilde(&p.alloc, &p.constants, &p.witness, &p.spec, None, eps).unwrap();
    let opts = TrajectoryOptions {
        i0: 0,
        j0: 0,
        step: TrajectoryOptions::default_step(eps),
        window: p.constants.gamma2(eps),
    };
    integrate_trajectory(&p.spec, &p.alloc, &psi, pert, opts)
}

fn zero(p: &Prepared, eps: f64) -> Perturbation {
    Perturbation::zero(p.spec.classes(), p.spec.pools(), eps, 1.0).unwrap()
}

fn assert_bookkeeping(traj: &FluidTrajectory) {
    assert!(!traj.samples.is_empty());
    for s in &traj.samples {
        let rows = s.psi.row_sums();
        let cols = s.psi.col_sums();
        for ((&y, &x), row) in s.y.iter().zip(&s.x).zip(&rows) {
            assert!((y + row - x).abs() < 1e-9, "class balance at t = {}", s.t);
            assert!(y >= -1e-12 && x >= -1e-12);
        }
        for ((&z, col), cap) in s.z.iter().zip(&cols).zip(&traj.capacity) {
            assert!((z + col - cap).abs() < 1e-9, "pool balance at t = {}", s.t);
            assert!(z >= -1e-12);
        }
        assert!(s.psi.iter().all(|(_, _, &v)| v >= -1e-12));
    }
    // Intervals tile [0, tau] and alternate.
    assert_eq!(traj.intervals.first().map(|iv| iv.start), Some(0.0));
    assert_eq!(traj.intervals.last().map(|iv| iv.end), Some(traj.tau));
    for w in traj.intervals.windows(2) {
        assert_eq!(w[0].end, w[1].start);
        assert_ne!(w[0].phase, w[1].phase);
    }
    assert!(traj.samples.windows(2).all(|w| w[0].t <= w[1].t));
}

#[test]
fn example_one_small_eps_enters_hold() {
    let p = prepare(builtin_example(1).unwrap());
    let traj = trajectory(&p, &zero(&p, 1e-4)).unwrap();
    assert_bookkeeping(&traj);
    assert!(traj.k_count >= 1, "expected at least one hold interval");
    assert_eq!(traj.zetas.len(), traj.k_count);
    for s in traj
        .samples
        .iter()
        .filter(|s| s.phase == Phase::Hold && s.k < traj.k_count)
    {
        assert!(
            s.y.iter().sum::<f64>() <= 1e-12,
            "queue in hold at t = {}",
            s.t
        );
    }
    let report = verify_theorem3(&traj, &p.constants, 1e-4);
    assert!(report.passed(), "{report:#?}");
}

#[test]
fn sinusoidal_perturbation_keeps_identities() {
    let p = prepare(builtin_example(1).unwrap());
    let pert = Perturbation::sinusoid(2, 3, 1e-4, 1.0, 0.01, 16).unwrap();
    let traj = trajectory(&p, &pert).unwrap();
    assert_bookkeeping(&traj);
}

#[test]
fn random_walk_perturbation_keeps_identities() {
    let p = prepare(fast_drain_network());
    let pert = Perturbation::random_walk(2, 2, 1e-4, 1.0, 1e-3, 1e-3, 9).unwrap();
    let traj = trajectory(&p, &pert).unwrap();
    assert_bookkeeping(&traj);
}

#[test]
fn open_witness_trajectory() {
    let p = prepare(builtin_example(2).unwrap());
    let traj = trajectory(&p, &zero(&p, 1e-4)).unwrap();
    assert_bookkeeping(&traj);
    assert!(traj.busy_measure <= p.constants.gamma1(1e-4));
}

#[test]
fn large_eps_violates_the_regime() {
    let p = prepare(builtin_example(1).unwrap());
    match trajectory(&p, &zero(&p, 1e-2)) {
        Err(FluidError::RegimeViolated {
            quantity, value, ..
        }) => {
            assert!(quantity.starts_with('Y'), "{quantity}");
            assert!(value < 0.0);
        }
        other => panic!("expected a regime violation, got {other:?}"),
    }
}

#[test]
fn stopping_times_are_ordered() {
    let p = prepare(fast_drain_network());
    let traj = trajectory(&p, &zero(&p, 1e-3)).unwrap();
    assert_bookkeeping(&traj);
    assert!(traj.tau <= traj.sigma);
    if let Some(tt) = traj.tau_tilde {
        assert!(tt >= traj.tau);
    }
    assert!(traj.window <= traj.tau);
    for (z, e) in traj.zetas.iter().zip(&traj.etas) {
        assert!(z < e);
    }
}
