//! Matrix-level operations composed from optical MVMs: signed and complex
//! operands, matrix products, matrix sums on a second comb, and the
//! Neumann-series inverse.

pub mod encoding;
pub mod mmm;
pub mod neumann;

pub use encoding::{dynamic_scale, ComplexMatrix, SignedMatrix, SignedVector};
pub use mmm::{MmaUnit, MmmMode, Pipeline, Scheduled};
pub use neumann::{
    from_real_embedding, inversion_residual, neumann_invert, neumann_invert_optical, neumann_series,
    neumann_split, real_embedding, IterationRecord, NeumannConfig, NeumannFidelity, NeumannRun,
};

use crate::mvm_engine::EngineError;
use crate::wdm_planner::PlanError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("Z has a zero diagonal entry at index {index}")]
    ZeroDiagonal { index: usize },
    #[error("matrix addition needs an interleaved second comb; none was planned")]
    PlanMissing,
    #[error("optical fidelity needs an engine")]
    EngineRequired,
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl From<PlanError> for PipelineError {
    fn from(e: PlanError) -> Self {
        Self::Engine(EngineError::Plan(e))
    }
}
