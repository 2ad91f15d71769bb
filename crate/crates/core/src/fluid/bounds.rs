//! Post-hoc checks of a fluid trajectory against the busy-time and
//! interval-length bounds.

use serde::Serialize;

use super::constants::FluidConstants;
use super::trajectory::{FluidTrajectory, IntervalEnd, Phase, BUSY_TOL};

/// What a failed check implicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// A structural property of the trajectory itself.
    Feasibility,
    /// A bound built from the derived constants.
    ConstantBound,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub name: String,
    pub kind: CheckKind,
    pub measured: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub eps: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub checks: Vec<BoundCheck>,
}

impl BoundsReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// True when every structural check held but some constant bound did not,
    /// which points at the constants rather than the trajectory.
    pub fn constants_suspect(&self) -> bool {
        let structural = self
            .checks
            .iter()
            .filter(|c| c.kind == CheckKind::Feasibility)
            .all(|c| c.passed);
        structural && !self.passed()
    }

    pub fn get(&self, name: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn upper(name: &str, kind: CheckKind, measured: f64, bound: f64) -> BoundCheck {
    BoundCheck {
        name: name.to_string(),
        kind,
        measured,
        bound,
        passed: measured <= bound,
    }
}

pub fn verify_theorem3(
    traj: &FluidTrajectory,
    constants: &FluidConstants,
    eps: f64,
) -> BoundsReport {
    let gamma1 = constants.gamma1(eps);
    let gamma2 = constants.gamma2(eps);
    let mut checks = vec![
        upper(
            "busy_measure",
            CheckKind::ConstantBound,
            traj.busy_measure,
            gamma1,
        ),
        upper("sup_dev", CheckKind::ConstantBound, traj.sup_dev, gamma1),
    ];

    let drain_max = traj
        .intervals
        .iter()
        .filter(|iv| iv.phase == Phase::Drain)
        .map(|iv| iv.len())
        .fold(0.0, f64::max);
    checks.push(upper(
        "drain_interval_max",
        CheckKind::ConstantBound,
        drain_max,
        constants.m1 * eps,
    ));

    // Only holds ended by their own exit rule have a meaningful length.
    let hold_slack = traj
        .intervals
        .iter()
        .filter(|iv| iv.phase == Phase::Hold && iv.ended_by == IntervalEnd::Threshold)
        .map(|iv| iv.len() - constants.m3 / iv.k as f64)
        .fold(f64::INFINITY, f64::min);
    if hold_slack.is_finite() {
        checks.push(BoundCheck {
            name: "hold_interval_min_slack".into(),
            kind: CheckKind::ConstantBound,
            measured: hold_slack,
            bound: 0.0,
            passed: hold_slack >= 0.0,
        });
    }

    let hold_queue = traj
        .intervals
        .iter()
        .filter(|iv| iv.phase == Phase::Hold && iv.k < traj.k_count)
        .map(|iv| iv.max_queue)
        .fold(0.0, f64::max);
    checks.push(upper(
        "hold_queue_max",
        CheckKind::Feasibility,
        hold_queue,
        BUSY_TOL,
    ));

    let conservation = traj
        .samples
        .iter()
        .map(|s| {
            let rows = s.psi.row_sums();
            let cols = s.psi.col_sums();
            let r =
                s.x.iter()
                    .zip(&s.y)
                    .zip(&rows)
                    .map(|((x, y), p)| (y + p - x).abs());
            let c =
                s.z.iter()
                    .zip(&cols)
                    .zip(&traj.capacity)
                    .map(|((z, p), cap)| (z + p - cap).abs());
            r.chain(c).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    checks.push(upper(
        "conservation",
        CheckKind::Feasibility,
        conservation,
        1e-8,
    ));

    BoundsReport {
        eps,
        gamma1,
        gamma2,
        checks,
    }
}
