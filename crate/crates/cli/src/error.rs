//! Failures and the exit codes scripts can rely on.

use std::path::Path;
use std::process::ExitCode;

use subopt_core::fluid::{FluidError, PerturbationError, PsiTildeError};
use subopt_core::sim::SimError;
use subopt_core::AnalysisError;
use thiserror::Error;

pub const EXIT_OPTIMAL: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_ASSUMPTION: u8 = 2;
pub const EXIT_REGIME: u8 = 3;
pub const EXIT_SUBOPTIMAL: u8 = 10;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Perturbation(#[from] PerturbationError),
    #[error("epsilon regime violated: {0}")]
    PsiTilde(#[from] PsiTildeError),
    #[error(transparent)]
    Fluid(#[from] FluidError),
    #[error(transparent)]
    Sim(#[from] SimError),
    /// Outputs were written, but some runs stopped on a regime violation.
    #[error("{0}")]
    RegimeAfterOutput(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Analysis(e) if e.is_assumption() || matches!(e, AnalysisError::Optimal) => {
                EXIT_ASSUMPTION
            }
            CliError::PsiTilde(_) | CliError::RegimeAfterOutput(_) => EXIT_REGIME,
            CliError::Fluid(FluidError::RegimeViolated { .. }) => EXIT_REGIME,
            CliError::Sim(SimError::RegimeViolated { .. } | SimError::Setup(_)) => EXIT_REGIME,
            _ => EXIT_USAGE,
        }
    }

    pub fn exit(&self) -> ExitCode {
        ExitCode::from(self.exit_code())
    }
}
