//! Stochastic many-server simulation under the drain/hold policy.

pub mod engine;
pub mod policy;
pub mod rng;
pub mod sweep;

pub use engine::{
    replay, run, Event, LogKind, LogRecord, RunMetrics, RunOptions, RunOutput, SimError, Simulation,
};
pub use policy::{Phase, Policy, SetupError, SimSetup, Transition};
pub use rng::{derive_seed, ArrivalKind};
pub use sweep::{sweep, ScaleSummary, SweepConfig, SweepRow, SweepTable};
