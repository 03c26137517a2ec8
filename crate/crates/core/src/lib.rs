//! Behavioral simulator and design calculator for a monolithic
//! silicon-photonics linear-algebra accelerator.
//!
//! The crate is layered bottom-up:
//!
//! * [`wdm_planner`] picks carrier wavelengths and resonator geometry.
//! * [`device_models`] holds transfer and noise models for every block of
//!   the signal chain.
//! * [`mvm_engine`] pushes quantized operands through that chain.
//! * [`linalg_pipeline`] composes matrix products, additions and the
//!   Neumann-series inverse on top of the engine.
//! * [`mimo_bench`] measures detection accuracy on massive-MIMO uplinks.
//! * [`perf_model`] projects power, area and throughput across array sizes.
//! * [`cli`] wires it all to seeded, config-driven runs.

pub mod cli;
pub mod device_models;
pub mod linalg_pipeline;
pub mod mimo_bench;
pub mod mvm_engine;
pub mod perf_model;
pub mod validation;
pub mod wdm_planner;

pub use wdm_planner::{MaterialModel, PlannerConfig, WdmPlan};

/// Top-level error, one variant per layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Plan(#[from] wdm_planner::PlanError),
    #[error(transparent)]
    Device(#[from] device_models::DeviceError),
    #[error(transparent)]
    Engine(#[from] mvm_engine::EngineError),
    #[error(transparent)]
    Pipeline(#[from] linalg_pipeline::PipelineError),
    #[error(transparent)]
    Mimo(#[from] mimo_bench::MimoError),
    #[error(transparent)]
    Config(#[from] cli::ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
