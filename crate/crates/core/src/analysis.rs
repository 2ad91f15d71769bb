//! End-to-end pipeline: network -> static allocation -> verdict -> fluid
//! constants. Front ends call these rather than wiring the stages themselves.

use thiserror::Error;

use crate::allocation::{
    allocation_from_override, solve_static, AllocationError, StaticAllocation,
};
use crate::fluid::constants::{compute_constants, ConstantsError, FluidConstants};
use crate::network::{NetworkDocument, NetworkSpec, SpecError};
use crate::paths::{classify, ClassifyError, SimplePath, SuboptimalityVerdict, Verdict};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Allocation(#[from] AllocationError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Constants(#[from] ConstantsError),
    #[error("network is throughput optimal; no witness path")]
    Optimal,
}

impl AnalysisError {
    /// Whether the failure is a modelling assumption rather than a bug or I/O.
    pub fn is_assumption(&self) -> bool {
        matches!(self, AnalysisError::Spec(e) if !matches!(e, SpecError::Parse(_)))
            || matches!(
                self,
                AnalysisError::Allocation(
                    AllocationError::NotCritical { .. }
                        | AllocationError::PartialUtilization { .. }
                        | AllocationError::NotTree(_)
                        | AllocationError::Infeasible
                        | AllocationError::InvalidOverride(_)
                )
            )
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub spec: NetworkSpec,
    pub alloc: StaticAllocation,
    pub verdict: SuboptimalityVerdict,
}

impl Analysis {
    pub fn is_suboptimal(&self) -> bool {
        self.verdict.verdict == Verdict::Suboptimal
    }

    pub fn witness(&self) -> Result<&SimplePath, AnalysisError> {
        self.verdict
            .witness_path
            .as_ref()
            .ok_or(AnalysisError::Optimal)
    }

    pub fn constants(&self) -> Result<FluidConstants, AnalysisError> {
        Ok(compute_constants(&self.alloc, self.witness()?, &self.spec)?)
    }
}

pub fn analyze(spec: &NetworkSpec) -> Result<Analysis, AnalysisError> {
    let alloc = solve_static(spec)?;
    let verdict = classify(&alloc, spec)?;
    Ok(Analysis {
        spec: spec.clone(),
        alloc,
        verdict,
    })
}

/// Like [`analyze`], honouring a supplied static allocation if the document has one.
pub fn analyze_document(doc: &NetworkDocument) -> Result<Analysis, AnalysisError> {
    let spec = doc.to_spec()?;
    let alloc = match doc.xi_override()? {
        Some(xi) => allocation_from_override(&spec, &xi)?,
        None => solve_static(&spec)?,
    };
    let verdict = classify(&alloc, &spec)?;
    Ok(Analysis {
        spec,
        alloc,
        verdict,
    })
}
