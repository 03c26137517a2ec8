//! Config-driven entry points behind the `msiph` binary.
//!
//! Each command reads an [`ExperimentConfig`], writes its data files plus the
//! resolved config into an output directory, and returns a short summary.
//! Reruns with the same config and seed produce byte-identical files.

mod commands;
mod config;

pub use commands::{
    cmd_invert, cmd_mimo, cmd_mvm, cmd_perf, cmd_plan, cmd_validate, run, Command, Format, Outcome,
    Output, VERSION,
};
pub use config::{ConfigError, ExperimentConfig};
