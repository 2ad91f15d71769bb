//! Signed simple paths on the basic tree and the LP test for suboptimality.

use serde::Serialize;
use thiserror::Error;

use crate::allocation::{StaticAllocation, Vertex};
use crate::lp::{LpError, LpProblem};
use crate::matrix::Matrix;
use crate::network::NetworkSpec;

/// Verdict tolerance on path weights and on the LP optimum.
pub const TOL_VERDICT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    /// Closed by a nonbasic activity.
    Closed,
    /// Closed by a pair that is not an activity.
    Open,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignedEdge {
    pub class: usize,
    pub pool: usize,
    pub sign: i8,
    /// `false` only for the closing activity of a closed path.
    pub basic: bool,
}

/// A class-to-pool path of the basic tree together with its closing pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplePath {
    /// `i0, j0, i1, j1, ..., ik, jk`.
    pub vertices: Vec<Vertex>,
    pub kind: PathKind,
    /// Edges carrying a sign; includes the closing activity for closed paths.
    pub edges: Vec<SignedEdge>,
    pub weight: f64,
}

impl SimplePath {
    pub fn first_class(&self) -> usize {
        match self.vertices[0] {
            Vertex::Class(i) => i,
            Vertex::Pool(_) => unreachable!("paths start at a class"),
        }
    }

    pub fn last_pool(&self) -> usize {
        match self.vertices[self.vertices.len() - 1] {
            Vertex::Pool(j) => j,
            Vertex::Class(_) => unreachable!("paths end at a pool"),
        }
    }

    /// Number of class-pool hops beyond the first pair.
    pub fn k(&self) -> usize {
        self.vertices.len() / 2 - 1
    }

    pub fn sign_of(&self, i: usize, j: usize) -> Option<i8> {
        self.edges
            .iter()
            .find(|e| e.class == i && e.pool == j)
            .map(|e| e.sign)
    }

    pub fn positive_edges(&self) -> impl Iterator<Item = &SignedEdge> {
        self.edges.iter().filter(|e| e.sign > 0)
    }

    pub fn negative_edges(&self) -> impl Iterator<Item = &SignedEdge> {
        self.edges.iter().filter(|e| e.sign < 0)
    }

    pub fn label(&self) -> String {
        self.vertices
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// Signed weight of a path: sum of sign times rate over its edges.
pub fn path_signed_weight(path: &SimplePath, spec: &NetworkSpec) -> f64 {
    path.edges
        .iter()
        .map(|e| f64::from(e.sign) * spec.mu()[(e.class, e.pool)])
        .sum()
}

fn build_path(alloc: &StaticAllocation, spec: &NetworkSpec, i: usize, j: usize) -> SimplePath {
    let vertices = alloc.tree.path(Vertex::Class(i), Vertex::Pool(j));
    // Walking from the far pool back to the starting class, pool-to-class hops
    // are positive and class-to-pool hops negative. In forward order that makes
    // (i_m, j_m) positive and (i_m, j_{m-1}) negative.
    let mut edges = Vec::with_capacity(vertices.len());
    for w in vertices.windows(2) {
        let (edge, sign) = match (w[0], w[1]) {
            (Vertex::Class(a), Vertex::Pool(b)) => ((a, b), 1),
            (Vertex::Pool(b), Vertex::Class(a)) => ((a, b), -1),
            _ => unreachable!("tree is bipartite"),
        };
        edges.push(SignedEdge {
            class: edge.0,
            pool: edge.1,
            sign,
            basic: true,
        });
    }
    let kind = if spec.is_activity(i, j) {
        edges.push(SignedEdge {
            class: i,
            pool: j,
            sign: -1,
            basic: false,
        });
        PathKind::Closed
    } else {
        PathKind::Open
    };
    let mut path = SimplePath {
        vertices,
        kind,
        edges,
        weight: 0.0,
    };
    path.weight = path_signed_weight(&path, spec);
    path
}

/// One path per nonbasic class-pool pair, in row-major pair order.
pub fn enumerate_simple_paths(alloc: &StaticAllocation, spec: &NetworkSpec) -> Vec<SimplePath> {
    let mut out = Vec::new();
    for i in 0..spec.classes() {
        for j in 0..spec.pools() {
            if !alloc.is_basic(i, j) {
                out.push(build_path(alloc, spec, i, j));
            }
        }
    }
    out
}

/// Most negative path; ties go to the lexicographically smaller vertex list.
pub fn witness(paths: &[SimplePath]) -> Option<&SimplePath> {
    paths
        .iter()
        .filter(|p| p.weight < -TOL_VERDICT)
        .min_by(|a, b| {
            a.weight
                .total_cmp(&b.weight)
                .then_with(|| a.vertices.cmp(&b.vertices))
        })
}

/// Maximum extra processing rate over reallocations that keep per-class mass and
/// per-pool capacity, with the maximizing reallocation.
pub fn solve_mmax(alloc: &StaticAllocation, spec: &NetworkSpec) -> Result<(f64, Matrix), LpError> {
    let acts: Vec<(usize, usize)> = spec.activities().collect();
    let mut lp = LpProblem::maximize(acts.iter().map(|&(i, j)| spec.mu()[(i, j)]).collect());
    for i in 0..spec.classes() {
        lp.add_le(
            acts.iter()
                .map(|&(a, _)| if a == i { 1.0 } else { 0.0 })
                .collect(),
            0.0,
        );
    }
    for j in 0..spec.pools() {
        lp.add_le(
            acts.iter()
                .map(|&(_, b)| if b == j { 1.0 } else { 0.0 })
                .collect(),
            0.0,
        );
    }
    lp.set_lower_bounds(acts.iter().map(|&(i, j)| -alloc.psi_star[(i, j)]).collect());
    let sol = lp.solve()?;
    debug_assert!(
        sol.is_optimal(),
        "feasible set contains zero and is bounded"
    );
    let mut sigma = Matrix::zeros(spec.classes(), spec.pools());
    for (k, &(i, j)) in acts.iter().enumerate() {
        sigma[(i, j)] = sol.x[k];
    }
    Ok((sol.objective.max(0.0), sigma))
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error(
        "internal inconsistency: LP optimum {m_max} and minimum path weight {min_weight} disagree"
    )]
    Disagreement { m_max: f64, min_weight: f64 },
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Optimal,
    Suboptimal,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuboptimalityVerdict {
    pub verdict: Verdict,
    pub witness_path: Option<SimplePath>,
    pub all_paths: Vec<SimplePath>,
    pub m_max: f64,
    pub sigma_opt: Matrix,
}

/// Decides suboptimality by path enumeration and by the LP, insisting they agree.
pub fn classify(
    alloc: &StaticAllocation,
    spec: &NetworkSpec,
) -> Result<SuboptimalityVerdict, ClassifyError> {
    let all_paths = enumerate_simple_paths(alloc, spec);
    let (m_max, sigma_opt) = solve_mmax(alloc, spec)?;
    let witness_path = witness(&all_paths).cloned();
    let by_lp = m_max > TOL_VERDICT;
    if by_lp != witness_path.is_some() {
        let min_weight = all_paths
            .iter()
            .map(|p| p.weight)
            .fold(f64::INFINITY, f64::min);
        return Err(ClassifyError::Disagreement { m_max, min_weight });
    }
    Ok(SuboptimalityVerdict {
        verdict: if by_lp {
            Verdict::Suboptimal
        } else {
            Verdict::Optimal
        },
        witness_path,
        all_paths,
        m_max,
        sigma_opt,
    })
}

/// Outcome of shifting mass along a negative path.
#[derive(Debug, Clone)]
pub struct PathShift {
    pub psi: Matrix,
    pub step: f64,
    pub nonnegative: bool,
    pub rows_within_mass: bool,
    pub cols_within_capacity: bool,
    /// Total processing rate minus total arrival rate.
    pub rate_gain: f64,
}

impl PathShift {
    pub fn improves(&self) -> bool {
        self.nonnegative
            && self.rows_within_mass
            && self.cols_within_capacity
            && self.rate_gain > 0.0
    }
}

/// Moves the largest admissible mass along `path`: subtract `step * sign` on
/// every path edge, where `step` is the smallest basic mass on the path.
pub fn shift_along_path(
    path: &SimplePath,
    alloc: &StaticAllocation,
    spec: &NetworkSpec,
) -> PathShift {
    let step = path
        .edges
        .iter()
        .filter(|e| e.basic)
        .map(|e| alloc.psi_star[(e.class, e.pool)])
        .fold(f64::INFINITY, f64::min);
    let mut psi = alloc.psi_star.clone();
    for e in &path.edges {
        psi[(e.class, e.pool)] -= step * f64::from(e.sign);
    }
    let tol = 1e-9;
    let rate: f64 = psi.iter().map(|(i, j, &v)| spec.mu()[(i, j)] * v).sum();
    let arrivals: f64 = spec.lambda().iter().sum();
    PathShift {
        nonnegative: psi.as_slice().iter().all(|&v| v >= -tol),
        rows_within_mass: psi
            .row_sums()
            .iter()
            .zip(&alloc.x_star)
            .all(|(r, x)| *r <= x + tol),
        cols_within_capacity: psi
            .col_sums()
            .iter()
            .zip(spec.nu())
            .all(|(c, v)| *c <= v + tol),
        rate_gain: rate - arrivals,
        psi,
        step,
    }
}
