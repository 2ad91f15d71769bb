//! Static fluid allocation: the min-load LP, full-utilization check and the
//! basic-activity tree.

use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::lp::{LpError, LpProblem, LpStatus};
use crate::matrix::Matrix;
use crate::network::NetworkSpec;

/// Entries of the optimal allocation above this value are basic.
pub const TOL_BASIC: f64 = 1e-9;
/// Tolerance on the optimal load and the utilization total.
pub const TOL_LOAD: f64 = 1e-9;
/// Pivot budget for the search over alternative optimal bases.
pub const BASIS_SEARCH_CAP: usize = 1000;

#[derive(Debug, Error)]
pub enum AllocationError {
    #[error("not critically loaded: subcritical or supercritical, optimal load rho* = {rho}")]
    NotCritical { rho: f64 },
    #[error("partial utilization: maximal total utilization {total} < {pools} pools")]
    PartialUtilization { total: f64, pools: usize },
    #[error("basic graph not a tree: {0}")]
    NotTree(TreeDefect),
    #[error("LP infeasible: no allocation meets the arrival rates")]
    Infeasible,
    #[error("invalid allocation override: {0}")]
    InvalidOverride(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeDefect {
    EdgeCount {
        found: usize,
        expected: usize,
    },
    Disconnected,
    /// No tree-supported optimum was reached within the basis search budget.
    SearchExhausted {
        support: usize,
        expected: usize,
    },
}

impl fmt::Display for TreeDefect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeDefect::EdgeCount { found, expected } => {
                write!(
                    f,
                    "{found} basic activities, a spanning tree needs {expected}"
                )
            }
            TreeDefect::Disconnected => write!(f, "support is disconnected"),
            TreeDefect::SearchExhausted { support, expected } => write!(
                f,
                "best vertex has support {support} (tree needs {expected}); \
                 no tree-supported optimum found within {BASIS_SEARCH_CAP} pivots"
            ),
        }
    }
}

/// A node of the class/pool bipartite graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Vertex {
    Class(usize),
    Pool(usize),
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Vertex::Class(i) => write!(f, "c{}", i + 1),
            Vertex::Pool(j) => write!(f, "p{}", j + 1),
        }
    }
}

impl Serialize for Vertex {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Spanning tree on classes and pools formed by the basic activities.
#[derive(Debug, Clone)]
pub struct BasicTree {
    classes: usize,
    pools: usize,
    edges: Vec<(usize, usize)>,
    class_adj: Vec<Vec<usize>>,
    pool_adj: Vec<Vec<usize>>,
}

impl BasicTree {
    /// Builds the tree, rejecting edge sets that are not spanning trees.
    pub fn new(
        classes: usize,
        pools: usize,
        mut edges: Vec<(usize, usize)>,
    ) -> Result<Self, TreeDefect> {
        edges.sort_unstable();
        edges.dedup();
        let expected = classes + pools - 1;
        if edges.len() != expected {
            return Err(TreeDefect::EdgeCount {
                found: edges.len(),
                expected,
            });
        }
        let mut class_adj = vec![Vec::new(); classes];
        let mut pool_adj = vec![Vec::new(); pools];
        for &(i, j) in &edges {
            class_adj[i].push(j);
            pool_adj[j].push(i);
        }
        let tree = Self {
            classes,
            pools,
            edges,
            class_adj,
            pool_adj,
        };
        // n-1 edges plus connectivity implies acyclic.
        if tree.reachable_from(Vertex::Class(0)).len() != classes + pools {
            return Err(TreeDefect::Disconnected);
        }
        Ok(tree)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn pools(&self) -> usize {
        self.pools
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i, j)).is_ok()
    }

    pub fn neighbors(&self, v: Vertex) -> Vec<Vertex> {
        match v {
            Vertex::Class(i) => self.class_adj[i].iter().map(|&j| Vertex::Pool(j)).collect(),
            Vertex::Pool(j) => self.pool_adj[j].iter().map(|&i| Vertex::Class(i)).collect(),
        }
    }

    pub fn degree(&self, v: Vertex) -> usize {
        match v {
            Vertex::Class(i) => self.class_adj[i].len(),
            Vertex::Pool(j) => self.pool_adj[j].len(),
        }
    }

    fn reachable_from(&self, start: Vertex) -> Vec<Vertex> {
        let mut seen = vec![start];
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for w in self.neighbors(v) {
                if !seen.contains(&w) {
                    seen.push(w);
                    stack.push(w);
                }
            }
        }
        seen
    }

    /// The unique tree path from `from` to `to`, both endpoints included.
    pub fn path(&self, from: Vertex, to: Vertex) -> Vec<Vertex> {
        let mut parent: std::collections::HashMap<Vertex, Vertex> = Default::default();
        let mut stack = vec![from];
        parent.insert(from, from);
        while let Some(v) = stack.pop() {
            if v == to {
                break;
            }
            for w in self.neighbors(v) {
                if let std::collections::hash_map::Entry::Vacant(e) = parent.entry(w) {
                    e.insert(v);
                    stack.push(w);
                }
            }
        }
        let mut out = vec![to];
        let mut cur = to;
        while cur != from {
            cur = parent[&cur];
            out.push(cur);
        }
        out.reverse();
        out
    }
}

/// Optimal static allocation with its derived fluid masses and basic tree.
#[derive(Debug, Clone)]
pub struct StaticAllocation {
    pub xi_star: Matrix,
    pub rho_star: f64,
    pub psi_star: Matrix,
    pub x_star: Vec<f64>,
    pub tree: BasicTree,
}

impl StaticAllocation {
    pub fn basic_edges(&self) -> &[(usize, usize)] {
        self.tree.edges()
    }

    pub fn is_basic(&self, i: usize, j: usize) -> bool {
        self.tree.contains(i, j)
    }

    /// Largest violation of the three balance identities (rates, capacities, masses).
    pub fn balance_residual(&self, spec: &NetworkSpec) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..spec.classes() {
            let rate: f64 = (0..spec.pools())
                .map(|j| spec.mu()[(i, j)] * self.psi_star[(i, j)])
                .sum();
            worst = worst.max((rate - spec.lambda()[i]).abs());
        }
        for (c, v) in self.psi_star.col_sums().iter().zip(spec.nu()) {
            worst = worst.max((c - v).abs());
        }
        for (r, x) in self.psi_star.row_sums().iter().zip(&self.x_star) {
            worst = worst.max((r - x).abs());
        }
        worst
    }
}

impl Serialize for StaticAllocation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("StaticAllocation", 5)?;
        st.serialize_field("rho_star", &self.rho_star)?;
        st.serialize_field("xi_star", &self.xi_star)?;
        st.serialize_field("psi_star", &self.psi_star)?;
        st.serialize_field("x_star", &self.x_star)?;
        let edges: Vec<[Vertex; 2]> = self
            .basic_edges()
            .iter()
            .map(|&(i, j)| [Vertex::Class(i), Vertex::Pool(j)])
            .collect();
        st.serialize_field("basic_edges", &edges)?;
        st.end()
    }
}

fn activity_index(spec: &NetworkSpec) -> Vec<(usize, usize)> {
    spec.activities().collect()
}

fn rate_rows(spec: &NetworkSpec, acts: &[(usize, usize)], extra: usize) -> Vec<(Vec<f64>, f64)> {
    (0..spec.classes())
        .map(|i| {
            let mut row = vec![0.0; acts.len() + extra];
            for (k, &(a, j)) in acts.iter().enumerate() {
                if a == i {
                    row[k] = spec.mu()[(i, j)] * spec.nu()[j];
                }
            }
            (row, spec.lambda()[i])
        })
        .collect()
}

fn support(xi: &Matrix) -> Vec<(usize, usize)> {
    xi.iter()
        .filter(|(_, _, &v)| v > TOL_BASIC)
        .map(|(i, j, _)| (i, j))
        .collect()
}

/// Solves the min-load LP and returns the first tree-supported optimum found.
pub fn solve_static(spec: &NetworkSpec) -> Result<StaticAllocation, AllocationError> {
    let (classes, pools) = (spec.classes(), spec.pools());
    let acts = activity_index(spec);
    let n = acts.len();

    let mut objective = vec![0.0; n + 1];
    objective[n] = 1.0;
    let mut load = LpProblem::minimize(objective);
    for (row, rhs) in rate_rows(spec, &acts, 1) {
        load.add_eq(row, rhs);
    }
    for j in 0..pools {
        let mut row = vec![0.0; n + 1];
        for (k, &(_, b)) in acts.iter().enumerate() {
            if b == j {
                row[k] = 1.0;
            }
        }
        row[n] = -1.0;
        load.add_le(row, 0.0);
    }
    let sol = load.solve()?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(AllocationError::Infeasible),
        LpStatus::Unbounded => unreachable!("load is bounded below by zero"),
    }
    let rho = sol.objective;
    if (rho - 1.0).abs() > TOL_LOAD {
        return Err(AllocationError::NotCritical { rho });
    }

    let mut util = LpProblem::maximize(vec![1.0; n]);
    for (row, rhs) in rate_rows(spec, &acts, 0) {
        util.add_eq(row, rhs);
    }
    for j in 0..pools {
        let row = acts
            .iter()
            .map(|&(_, b)| if b == j { 1.0 } else { 0.0 })
            .collect();
        util.add_le(row, 1.0);
    }
    let best = util.solve()?;
    if !best.is_optimal() {
        return Err(AllocationError::Infeasible);
    }
    if best.objective < pools as f64 - TOL_LOAD {
        return Err(AllocationError::PartialUtilization {
            total: best.objective,
            pools,
        });
    }

    let to_matrix = |x: &[f64]| {
        let mut xi = Matrix::zeros(classes, pools);
        for (k, &(i, j)) in acts.iter().enumerate() {
            xi[(i, j)] = x[k].max(0.0);
        }
        xi
    };
    let first = to_matrix(&best.x);
    let first_support = support(&first).len();
    let found = util.search_optimal_vertices(BASIS_SEARCH_CAP, |x| {
        let xi = to_matrix(x);
        BasicTree::new(classes, pools, support(&xi)).is_ok()
    })?;
    let Some(x) = found else {
        let defect = match BasicTree::new(classes, pools, support(&first)) {
            Err(TreeDefect::EdgeCount { .. }) | Ok(_) => TreeDefect::SearchExhausted {
                support: first_support,
                expected: classes + pools - 1,
            },
            Err(d) => d,
        };
        return Err(AllocationError::NotTree(defect));
    };
    finish(spec, to_matrix(&x), rho)
}

/// Validates a user-supplied optimal allocation instead of solving for one.
pub fn allocation_from_override(
    spec: &NetworkSpec,
    xi: &Matrix,
) -> Result<StaticAllocation, AllocationError> {
    let bad = |m: String| Err(AllocationError::InvalidOverride(m));
    if xi.rows() != spec.classes() || xi.cols() != spec.pools() {
        return bad(format!(
            "shape {}x{} does not match network",
            xi.rows(),
            xi.cols()
        ));
    }
    for (i, j, &v) in xi.iter() {
        if !v.is_finite() || v < -TOL_BASIC {
            return bad(format!("entry ({}, {}) = {v} is negative", i + 1, j + 1));
        }
        if v > TOL_BASIC && !spec.is_activity(i, j) {
            return bad(format!(
                "entry ({}, {}) is positive off the activity set",
                i + 1,
                j + 1
            ));
        }
    }
    for i in 0..spec.classes() {
        let rate: f64 = (0..spec.pools())
            .map(|j| spec.mu()[(i, j)] * spec.nu()[j] * xi[(i, j)])
            .sum();
        if (rate - spec.lambda()[i]).abs() > TOL_LOAD * spec.lambda()[i].max(1.0) {
            return bad(format!(
                "class {} processing rate {rate} != arrival rate",
                i + 1
            ));
        }
    }
    for (j, c) in xi.col_sums().iter().enumerate() {
        if (c - 1.0).abs() > TOL_LOAD {
            return bad(format!("pool {} utilization {c} != 1", j + 1));
        }
    }
    finish(spec, xi.map(|v| v.max(0.0)), 1.0)
}

fn finish(spec: &NetworkSpec, xi: Matrix, rho: f64) -> Result<StaticAllocation, AllocationError> {
    let (classes, pools) = (spec.classes(), spec.pools());
    let tree = BasicTree::new(classes, pools, support(&xi)).map_err(AllocationError::NotTree)?;
    let xi = Matrix::from_fn(classes, pools, |i, j| {
        if tree.contains(i, j) {
            xi[(i, j)]
        } else {
            0.0
        }
    });
    let psi = Matrix::from_fn(classes, pools, |i, j| xi[(i, j)] * spec.nu()[j]);
    let x_star = psi.row_sums();
    Ok(StaticAllocation {
        xi_star: xi,
        rho_star: rho,
        psi_star: psi,
        x_star,
        tree,
    })
}
