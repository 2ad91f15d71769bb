//! Throughput-suboptimality analysis for multi-class many-server queueing
//! networks, with the fluid and stochastic control machinery that exploits it.

pub mod allocation;
pub mod analysis;
pub mod fluid;
pub mod lp;
pub mod matrix;
pub mod network;
pub mod paths;
pub mod report;
pub mod sim;

pub use analysis::{analyze, analyze_document, Analysis, AnalysisError};
pub use matrix::Matrix;
pub use network::{NetworkSpec, ScaledSystem};
