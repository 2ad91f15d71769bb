//! Shared fixtures and oracles for the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use subopt_core::allocation::{solve_static, BasicTree, StaticAllocation};
use subopt_core::fluid::constants::{compute_constants, FluidConstants};
use subopt_core::network::{scale_system, NetworkSpec};
use subopt_core::paths::{classify, SimplePath};
use subopt_core::sim::SimSetup;
use subopt_core::Matrix;

/// Two classes, two pools, closed witness with a steep drain. At `n` around
/// 4e6 the drain phase stays feasible long enough to reach hold.
pub fn fast_drain_network() -> NetworkSpec {
    NetworkSpec::new(
        vec![5.5, 0.5],
        vec![0.5, 1.0],
        Matrix::from_rows(&[vec![1.0, 10.0], vec![0.08, 1.0]]).unwrap(),
    )
    .unwrap()
}

pub struct Prepared {
    pub spec: NetworkSpec,
    pub alloc: StaticAllocation,
    pub witness: SimplePath,
    pub constants: FluidConstants,
}

pub fn prepare(spec: NetworkSpec) -> Prepared {
    let alloc = solve_static(&spec).unwrap();
    let witness = classify(&alloc, &spec)
        .unwrap()
        .witness_path
        .expect("suboptimal network");
    let constants = compute_constants(&alloc, &witness, &spec).unwrap();
    Prepared {
        spec,
        alloc,
        witness,
        constants,
    }
}

impl Prepared {
    pub fn setup(&self, n: u64) -> SimSetup {
        let sys = scale_system(&self.spec, &self.alloc.x_star, n).unwrap();
        SimSetup::new(
            &sys,
            &self.spec,
            &self.alloc,
            &self.constants,
            &self.witness,
        )
        .unwrap()
    }
}

/// Tree-supported matrix with the given margins, by a dense LU solve of the
/// balance equations (one redundant row dropped).
pub fn dense_tree_solve(tree: &BasicTree, a: &[f64], b: &[f64]) -> Matrix {
    let (ni, nj) = (tree.classes(), tree.pools());
    let edges = tree.edges();
    let m = edges.len();
    let mut sys = DMatrix::<f64>::zeros(ni + nj, m);
    for (k, &(i, j)) in edges.iter().enumerate() {
        sys[(i, k)] = 1.0;
        sys[(ni + j, k)] = 1.0;
    }
    let rhs = DVector::from_iterator(ni + nj, a.iter().chain(b).copied());
    let square = sys.rows(0, m).into_owned();
    let rhs = rhs.rows(0, m).into_owned();
    let phi = square.lu().solve(&rhs).expect("tree system is nonsingular");
    let mut out = Matrix::zeros(ni, nj);
    for (k, &(i, j)) in edges.iter().enumerate() {
        out[(i, j)] = phi[k];
    }
    out
}

/// Kolmogorov-Smirnov statistic of `samples` against Exp(`rate`).
pub fn ks_exponential(samples: &[f64], rate: f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = 1.0 - (-rate * x).exp();
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at the 1% level.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}
