//! Fluid model: tree balance map, drain/hold constants and trajectories.

pub mod bounds;
pub mod constants;
pub mod perturbation;
pub mod trajectory;
pub mod tree;

pub use bounds::{verify_theorem3, BoundCheck, BoundsReport, CheckKind};
pub use constants::{
    build_psi_tilde, compute_constants, hold_drift, FluidConstants, PsiTildeError,
};
pub use perturbation::{Perturbation, PerturbationError, PerturbationKind};
pub use trajectory::{integrate_trajectory, FluidError, FluidTrajectory, Phase, TrajectoryOptions};
pub use tree::{TreeError, TreeSolver};
