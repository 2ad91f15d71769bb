//! Network data model, built-in fixtures, random critical instances and n-scaling.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("malformed network document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("dimension mismatch: {what} has length {found}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-positive arrival rate lambda[{class}] = {value}")]
    NonPositiveArrival { class: usize, value: f64 },
    #[error("non-positive pool capacity nu[{pool}] = {value}")]
    NonPositiveCapacity { pool: usize, value: f64 },
    #[error("negative service rate mu[{class}][{pool}] = {value}")]
    NegativeRate {
        class: usize,
        pool: usize,
        value: f64,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("class {0} has no activity (every service rate is zero)")]
    NoActivity(usize),
    #[error("network must have at least one class and one pool")]
    Empty,
    #[error("unknown built-in example {0} (expected 1, 2 or 3)")]
    UnknownExample(u32),
}

/// Static network data. The activity set is always read off `mu > 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "NetworkDocument")]
pub struct NetworkSpec {
    lambda: Vec<f64>,
    nu: Vec<f64>,
    mu: Matrix,
}

/// On-disk JSON shape of a network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub classes: usize,
    pub pools: usize,
    pub lambda: Vec<f64>,
    pub nu: Vec<f64>,
    pub mu: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_star_override: Option<Vec<Vec<f64>>>,
}

impl From<NetworkSpec> for NetworkDocument {
    fn from(s: NetworkSpec) -> Self {
        Self {
            classes: s.classes(),
            pools: s.pools(),
            mu: s.mu.to_rows(),
            lambda: s.lambda,
            nu: s.nu,
            xi_star_override: None,
        }
    }
}

impl NetworkDocument {
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_spec(&self) -> Result<NetworkSpec, SpecError> {
        let check = |what, expected, found| {
            if expected == found {
                Ok(())
            } else {
                Err(SpecError::Dimension {
                    what,
                    expected,
                    found,
                })
            }
        };
        check("lambda", self.classes, self.lambda.len())?;
        check("nu", self.pools, self.nu.len())?;
        check("mu rows", self.classes, self.mu.len())?;
        for row in &self.mu {
            check("mu row", self.pools, row.len())?;
        }
        let mu = Matrix::from_rows(&self.mu).unwrap_or_else(|| Matrix::zeros(0, 0));
        NetworkSpec::new(self.lambda.clone(), self.nu.clone(), mu)
    }

    /// The optional user-supplied allocation, shape-checked against the network.
    pub fn xi_override(&self) -> Result<Option<Matrix>, SpecError> {
        let Some(rows) = &self.xi_star_override else {
            return Ok(None);
        };
        if rows.len() != self.classes || rows.iter().any(|r| r.len() != self.pools) {
            return Err(SpecError::Dimension {
                what: "xi_star_override",
                expected: self.classes * self.pools,
                found: rows.iter().map(Vec::len).sum(),
            });
        }
        Ok(Matrix::from_rows(rows))
    }
}

/// Parses and validates a JSON network document.
pub fn load_spec(text: &str) -> Result<NetworkSpec, SpecError> {
    NetworkDocument::parse(text)?.to_spec()
}

impl NetworkSpec {
    pub fn new(lambda: Vec<f64>, nu: Vec<f64>, mu: Matrix) -> Result<Self, SpecError> {
        if lambda.is_empty() || nu.is_empty() {
            return Err(SpecError::Empty);
        }
        if mu.rows() != lambda.len() {
            return Err(SpecError::Dimension {
                what: "mu rows",
                expected: lambda.len(),
                found: mu.rows(),
            });
        }
        if mu.cols() != nu.len() {
            return Err(SpecError::Dimension {
                what: "mu row",
                expected: nu.len(),
                found: mu.cols(),
            });
        }
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(SpecError::NonFinite("lambda"));
        }
        if nu.iter().any(|v| !v.is_finite()) {
            return Err(SpecError::NonFinite("nu"));
        }
        if mu.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(SpecError::NonFinite("mu"));
        }
        if let Some((class, &value)) = lambda.iter().enumerate().find(|(_, &v)| v <= 0.0) {
            return Err(SpecError::NonPositiveArrival { class, value });
        }
        if let Some((pool, &value)) = nu.iter().enumerate().find(|(_, &v)| v <= 0.0) {
            return Err(SpecError::NonPositiveCapacity { pool, value });
        }
        if let Some((class, pool, &value)) = mu.iter().find(|(_, _, &v)| v < 0.0) {
            return Err(SpecError::NegativeRate { class, pool, value });
        }
        if let Some(i) = (0..mu.rows()).find(|&i| mu.row(i).iter().all(|&v| v == 0.0)) {
            return Err(SpecError::NoActivity(i));
        }
        Ok(Self { lambda, nu, mu })
    }

    pub fn classes(&self) -> usize {
        self.lambda.len()
    }

    pub fn pools(&self) -> usize {
        self.nu.len()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn mu(&self) -> &Matrix {
        &self.mu
    }

    pub fn is_activity(&self, i: usize, j: usize) -> bool {
        self.mu[(i, j)] > 0.0
    }

    pub fn activities(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.mu
            .iter()
            .filter(|(_, _, &v)| v > 0.0)
            .map(|(i, j, _)| (i, j))
    }

    pub fn total_rate(&self) -> f64 {
        self.mu.as_slice().iter().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }
}

impl<'de> Deserialize<'de> for NetworkSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        NetworkDocument::deserialize(d)?
            .to_spec()
            .map_err(serde::de::Error::custom)
    }
}

/// One of the three reference networks.
pub fn builtin_example(id: u32) -> Result<NetworkSpec, SpecError> {
    let (lambda, nu, mu): (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) = match id {
        1 => (
            vec![8.0, 4.0],
            vec![1.0; 3],
            vec![vec![3.0, 10.0, 1.0], vec![1.0, 4.0, 2.0]],
        ),
        2 => (
            vec![8.0, 4.0],
            vec![1.0; 3],
            vec![vec![3.0, 10.0, 1.0], vec![0.0, 4.0, 2.0]],
        ),
        3 => (
            vec![4.0, 1.0, 2.0],
            vec![1.0; 3],
            vec![
                vec![2.0, 4.0, 0.5],
                vec![0.3, 1.0, 1.0],
                vec![0.1, 0.5, 4.0],
            ],
        ),
        other => return Err(SpecError::UnknownExample(other)),
    };
    NetworkSpec::new(lambda, nu, Matrix::from_rows(&mu).expect("rectangular"))
}

/// A random critically loaded network together with its known optimal allocation.
#[derive(Debug, Clone)]
pub struct GeneratedNetwork {
    pub spec: NetworkSpec,
    pub psi_star: Matrix,
    pub tree: Vec<(usize, usize)>,
}

/// Uniform spanning tree of the complete bipartite graph via the Aldous-Broder walk.
/// Vertices `0..classes` are classes, `classes..classes+pools` are pools.
pub fn random_bipartite_tree(
    classes: usize,
    pools: usize,
    rng: &mut impl Rng,
) -> Vec<(usize, usize)> {
    let total = classes + pools;
    let mut visited = vec![false; total];
    let mut current = rng.random_range(0..total);
    visited[current] = true;
    let mut remaining = total - 1;
    let mut edges = Vec::with_capacity(total.saturating_sub(1));
    let class_ids: Vec<usize> = (0..classes).collect();
    let pool_ids: Vec<usize> = (classes..total).collect();
    while remaining > 0 {
        let next = if current < classes {
            *pool_ids.choose(rng).expect("at least one pool")
        } else {
            *class_ids.choose(rng).expect("at least one class")
        };
        if !visited[next] {
            visited[next] = true;
            remaining -= 1;
            let (i, j) = if current < classes {
                (current, next - classes)
            } else {
                (next, current - classes)
            };
            edges.push((i, j));
        }
        current = next;
    }
    edges.sort_unstable();
    edges
}

/// Draws a network whose static LP has the unique optimum supported on a random
/// spanning tree.
///
/// Rates come from dual prices `y` (classes) and `w` (pools, summing to 1):
/// tree edges get `mu = w_j / (nu_j y_i)`, so their reduced cost is zero, and
/// optional off-tree activities get a strictly smaller rate, so their reduced
/// cost is positive. Complementary slackness then certifies `rho* = 1`, full
/// utilization and uniqueness of the tree-supported optimum.
pub fn random_critical_network(
    classes: usize,
    pools: usize,
    seed: u64,
) -> Result<GeneratedNetwork, SpecError> {
    if classes == 0 || pools == 0 {
        return Err(SpecError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = random_bipartite_tree(classes, pools, &mut rng);
    let nu: Vec<f64> = (0..pools).map(|_| rng.random_range(0.5..=2.0)).collect();

    let mut psi = Matrix::zeros(classes, pools);
    for &(i, j) in &tree {
        psi[(i, j)] = rng.random_range(0.1..=1.0);
    }
    let col = psi.col_sums();
    for &(i, j) in &tree {
        psi[(i, j)] *= nu[j] / col[j];
    }

    let y: Vec<f64> = (0..classes).map(|_| rng.random_range(0.5..=2.0)).collect();
    let mut w: Vec<f64> = (0..pools).map(|_| rng.random_range(0.5..=2.0)).collect();
    let w_total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= w_total);
    let scale = |i: usize, j: usize| w[j] / (nu[j] * y[i]);

    let mut mu = Matrix::zeros(classes, pools);
    for i in 0..classes {
        for j in 0..pools {
            if tree.contains(&(i, j)) {
                mu[(i, j)] = scale(i, j);
            } else if rng.random_bool(0.5) {
                mu[(i, j)] = rng.random_range(0.05..1.0) * scale(i, j);
            }
        }
    }
    let lambda: Vec<f64> = (0..classes)
        .map(|i| (0..pools).map(|j| mu[(i, j)] * psi[(i, j)]).sum())
        .collect();
    let spec = NetworkSpec::new(lambda, nu, mu)?;
    Ok(GeneratedNetwork {
        spec,
        psi_star: psi,
        tree,
    })
}

#[derive(Debug, Error)]
#[error("scaled parameter {what}[{index}] deviates by {deviation} > c n^-1/2 = {bound}")]
pub struct ScalingError {
    pub what: &'static str,
    pub index: usize,
    pub deviation: f64,
    pub bound: f64,
}

/// The n-th system in the sequence: arrival rates, server counts, rates, initial counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledSystem {
    pub n: u64,
    pub lambda_n: Vec<f64>,
    pub servers: Vec<i64>,
    pub mu_n: Matrix,
    pub x0: Vec<i64>,
}

impl ScaledSystem {
    /// Checks that every scaled parameter sits within `c / sqrt(n)` of its fluid limit.
    pub fn check_convergence(
        &self,
        spec: &NetworkSpec,
        x_star: &[f64],
        c: f64,
    ) -> Result<(), ScalingError> {
        let n = self.n as f64;
        let bound = c / n.sqrt();
        let check = |what, index, deviation: f64| {
            if deviation <= bound + 1e-12 {
                Ok(())
            } else {
                Err(ScalingError {
                    what,
                    index,
                    deviation,
                    bound,
                })
            }
        };
        for (i, (&ln, &l)) in self.lambda_n.iter().zip(spec.lambda()).enumerate() {
            check("lambda", i, (ln / n - l).abs())?;
        }
        for (j, (&s, &v)) in self.servers.iter().zip(spec.nu()).enumerate() {
            check("servers", j, (s as f64 / n - v).abs())?;
        }
        for (k, (a, b)) in self
            .mu_n
            .as_slice()
            .iter()
            .zip(spec.mu().as_slice())
            .enumerate()
        {
            check("mu", k, (a - b).abs())?;
        }
        for (i, (&x, &xs)) in self.x0.iter().zip(x_star).enumerate() {
            check("x0", i, (x as f64 / n - xs).abs())?;
        }
        Ok(())
    }
}

/// Scales a network to size `n` by rounding to the nearest admissible integers.
pub fn scale_system(
    spec: &NetworkSpec,
    x_star: &[f64],
    n: u64,
) -> Result<ScaledSystem, ScalingError> {
    let nf = n.max(1) as f64;
    let sys = ScaledSystem {
        n: n.max(1),
        lambda_n: spec.lambda().iter().map(|l| nf * l).collect(),
        servers: spec
            .nu()
            .iter()
            .map(|v| ((nf * v).round() as i64).max(1))
            .collect(),
        mu_n: spec.mu().clone(),
        x0: x_star.iter().map(|x| (nf * x).round() as i64).collect(),
    };
    sys.check_convergence(spec, x_star, 1.0)?;
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_activity_sets() {
        assert_eq!(builtin_example(1).unwrap().activities().count(), 6);
        let e2 = builtin_example(2).unwrap();
        assert_eq!(e2.activities().count(), 5);
        assert!(!e2.is_activity(1, 0));
        assert!(matches!(
            builtin_example(4),
            Err(SpecError::UnknownExample(4))
        ));
    }

    #[test]
    fn zero_arrival_rejected() {
        let doc = r#"{"classes":1,"pools":1,"lambda":[0],"nu":[1],"mu":[[1]]}"#;
        let err = load_spec(doc).unwrap_err();
        assert!(err.to_string().contains("non-positive arrival rate"));
    }

    #[test]
    fn distinct_diagnostics() {
        let bad_dim = r#"{"classes":2,"pools":1,"lambda":[1],"nu":[1],"mu":[[1]]}"#;
        assert!(matches!(
            load_spec(bad_dim),
            Err(SpecError::Dimension { .. })
        ));
        let bad_nu = r#"{"classes":1,"pools":1,"lambda":[1],"nu":[0],"mu":[[1]]}"#;
        assert!(matches!(
            load_spec(bad_nu),
            Err(SpecError::NonPositiveCapacity { .. })
        ));
        let bad_mu = r#"{"classes":1,"pools":2,"lambda":[1],"nu":[1,1],"mu":[[1,-1]]}"#;
        assert!(matches!(
            load_spec(bad_mu),
            Err(SpecError::NegativeRate { .. })
        ));
        let idle = r#"{"classes":2,"pools":1,"lambda":[1,1],"nu":[1],"mu":[[1],[0]]}"#;
        assert!(matches!(load_spec(idle), Err(SpecError::NoActivity(1))));
    }

    #[test]
    fn scaling_example_one() {
        let spec = builtin_example(1).unwrap();
        let sys = scale_system(&spec, &[1.5, 1.5], 100).unwrap();
        assert_eq!(sys.servers, vec![100, 100, 100]);
        assert_eq!(sys.x0, vec![150, 150]);
        assert_eq!(sys.lambda_n, vec![800.0, 400.0]);
        let sys = scale_system(&spec, &[1.5, 1.5], 1).unwrap();
        assert!(sys.servers.iter().all(|&s| s >= 1));
    }

    #[test]
    fn single_cell_generator() {
        let g = random_critical_network(1, 1, 0).unwrap();
        let s = &g.spec;
        assert!((s.lambda()[0] - s.mu()[(0, 0)] * s.nu()[0]).abs() < 1e-12);
        assert_eq!(g.tree, vec![(0, 0)]);
    }

    #[test]
    fn generator_tree_support() {
        let g = random_critical_network(2, 3, 7).unwrap();
        let positive = g.psi_star.iter().filter(|(_, _, &v)| v > 0.0).count();
        assert_eq!(positive, 4);
        assert_eq!(g.tree.len(), 4);
    }
}
