//! Discrete-event simulator: exact bookkeeping, determinism, sampler laws.

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use subopt_core::network::builtin_example;
use subopt_core::sim::rng::stream;
use subopt_core::sim::{run, ArrivalKind, Event, Phase, Policy, RunOptions, SimError, Simulation};

use common::{fast_drain_network, ks_critical_1pct, ks_exponential, prepare};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn hold_assignment_balances(d0 in -40i64..40, d1 in -40i64..40) {
        let p = prepare(builtin_example(1).unwrap());
        let setup = p.setup(10_000);
        let mut policy = Policy::new(&setup.x0);
        policy.phase = Phase::Hold;
        let x = vec![setup.x0[0] + d0, setup.x0[1] + d1];
        let a = policy.assign(&setup, &x).unwrap();
        let (rows, cols) = (a.psi.row_sums(), a.psi.col_sums());
        for ((&y, row), &xi) in a.y.iter().zip(&rows).zip(&x) {
            prop_assert_eq!(y + row, xi);
        }
        for ((&z, col), &cap) in a.z.iter().zip(&cols).zip(&setup.servers) {
            prop_assert_eq!(z + col, cap);
        }
        // Only the designated class queues and only the designated pool idles.
        prop_assert!(a.y.iter().enumerate().all(|(i, &v)| i == setup.i0 || v == 0));
        prop_assert!(a.z.iter().enumerate().all(|(j, &v)| j == setup.j0 || v == 0));
        prop_assert!(a.y[setup.i0] == 0 || a.z[setup.j0] == 0);
    }

    #[test]
    fn random_event_streams_conserve(choices in prop::collection::vec((0u8..3, 0u8..4), 1..400)) {
        let p = prepare(fast_drain_network());
        let setup = p.setup(4_000_000);
        let mut sim = Simulation::new(&setup, RunOptions::default()).unwrap();
        let mut t = 0.0;
        for (kind, pick) in choices {
            t += 1e-8;
            let event = if kind == 0 {
                Event::Arrival { class: (pick % 2) as usize }
            } else {
                let busy: Vec<(usize, usize)> =
                    sim.state().psi.iter().filter(|(_, _, &v)| v > 0).map(|(i, j, _)| (i, j)).collect();
                let (class, pool) = busy[pick as usize % busy.len()];
                Event::Departure { class, pool }
            };
            while sim.advance(t).unwrap().is_some() {}
            match sim.apply(event) {
                Ok(()) => prop_assert!(sim.check_invariants().is_ok()),
                Err(SimError::RegimeViolated { .. }) => break,
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }
        let m = sim.metrics();
        let s = sim.state();
        prop_assert_eq!(m.event_count, s.arrivals.iter().sum::<i64>() as u64 + s.departures.iter().map(|(_, _, &v)| v).sum::<i64>() as u64);
    }
}

#[test]
fn departures_from_idle_pairs_are_rejected() {
    let p = prepare(fast_drain_network());
    let setup = p.setup(4_000_000);
    let mut sim = Simulation::new(&setup, RunOptions::default()).unwrap();
    let idle = sim
        .state()
        .psi
        .iter()
        .find(|(_, _, &v)| v == 0)
        .map(|(i, j, _)| (i, j));
    if let Some((class, pool)) = idle {
        assert!(matches!(
            sim.apply(Event::Departure { class, pool }),
            Err(SimError::IdlePair { .. })
        ));
    }
    assert!(matches!(
        sim.advance(-1.0),
        Err(SimError::OutOfOrder { .. })
    ));
}

#[test]
fn zero_horizon_has_nothing_to_report() {
    let p = prepare(fast_drain_network());
    let setup = p.setup(4_000_000);
    let out = run(
        &setup,
        RunOptions {
            horizon: 0.0,
            ..RunOptions::default()
        },
    )
    .unwrap();
    assert_eq!(out.metrics.event_count, 0);
    assert_eq!(out.metrics.busy_time, 0.0);
    assert_eq!(out.metrics.sup_x_dev, 0.0);
    assert!(!out.metrics.stopped());
}

#[test]
fn seeds_drive_the_log() {
    let p = prepare(fast_drain_network());
    let setup = p.setup(4_000_000);
    let opts = |seed| RunOptions {
        seed,
        record_log: true,
        max_events: Some(5_000),
        ..RunOptions::default()
    };
    let a = run(&setup, opts(1)).unwrap();
    let b = run(&setup, opts(1)).unwrap();
    let c = run(&setup, opts(2)).unwrap();
    assert_eq!(a.log, b.log);
    assert_ne!(a.log, c.log);
    assert_eq!(a.log.len(), 5_000);
}

#[test]
fn regime_violation_keeps_partial_metrics() {
    let p = prepare(builtin_example(1).unwrap());
    let setup = p.setup(100);
    match run(
        &setup,
        RunOptions {
            seed: 3,
            ..RunOptions::default()
        },
    ) {
        Err(e @ SimError::RegimeViolated { .. }) => {
            let m = e.partial_metrics().unwrap();
            assert!(m.event_count > 0);
            assert!(m.t_end < 10.0);
            assert!(e
                .to_string()
                .starts_with("epsilon regime violated at n = 100"));
        }
        other => panic!("expected a regime violation, got {other:?}"),
    }
}

#[test]
fn exponential_interarrivals_pass_ks() {
    let mut rng = stream(77, 0);
    let gaps: Vec<f64> = (0..10_000)
        .map(|_| ArrivalKind::Exponential.interarrival(2.5, &mut rng))
        .collect();
    assert!(ks_exponential(&gaps, 2.5) < ks_critical_1pct(gaps.len()));
}

#[test]
fn uniform_interarrivals_have_the_right_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 20_000;
    let mean = (0..n)
        .map(|_| ArrivalKind::Uniform.interarrival(4.0, &mut rng))
        .sum::<f64>()
        / n as f64;
    assert!((mean - 0.25).abs() < 0.005, "{mean}");
    assert_eq!(ArrivalKind::Deterministic.interarrival(4.0, &mut rng), 0.25);
}
