//! Optical MVM simulation at three fidelity levels plus the fixed-point
//! reference they are measured against.

pub mod engine;
pub mod operands;

pub use engine::{
    end_to_end_gain_cal, stream_seed, EngineConfig, FidelityMode, GainCal, MvmEngine, RowDiagnostic,
};
pub use operands::{golden_mvm, max_code, quantize_unit, QuantizedMatrix, QuantizedVector};

use crate::device_models::DeviceError;
use crate::wdm_planner::PlanError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid operand: {0}")]
    InvalidOperand(String),
    #[error("device chain is not calibrated; only IDEAL mode is available")]
    UncalibratedDevice,
    #[error("row gains disagree by {:.3}% (limit 1%)", spread * 100.0)]
    GainSpreadExceeded { spread: f64 },
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}
