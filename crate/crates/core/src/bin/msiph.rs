use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use msiph::cli::{run, Command, ExperimentConfig, Format};

#[derive(Parser)]
#[command(name = "msiph", version, about = "Silicon-photonics linear-algebra accelerator simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Flat key=value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides run.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides run.format.
    #[arg(long, global = true, value_parser = ["csv", "jsonl"])]
    format: Option<String>,
    /// Extra key=value overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// WDM grid, resonance modes and ring radii.
    Plan,
    /// Matrix-vector products against the fixed-point oracle.
    Mvm {
        /// Enumerate every operand combination.
        #[arg(long)]
        exhaustive: bool,
    },
    /// Neumann-series inverse of a matrix.
    Invert,
    /// Massive-MIMO detection sweep.
    Mimo,
    /// Power, area and throughput table.
    Perf,
    /// Cross-module acceptance report; fails on any failed check.
    Validate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> msiph::Result<bool> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| msiph::cli::ConfigError::Malformed {
            line: 0,
            text: kv.clone(),
        })?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("run.seed", seed.to_string())?;
    }
    if let Some(f) = &cli.format {
        cfg.set("run.format", f.as_str())?;
    }
    cfg.get::<Format>("run.format")?;
    let command = match cli.command {
        Cmd::Plan => Command::Plan,
        Cmd::Mvm { exhaustive } => {
            if exhaustive {
                cfg.set("mvm.exhaustive", "true")?;
            }
            Command::Mvm
        }
        Cmd::Invert => Command::Invert,
        Cmd::Mimo => Command::Mimo,
        Cmd::Perf => Command::Perf,
        Cmd::Validate => Command::Validate,
    };
    let outcome = run(command, &cfg, &cli.out)?;
    for line in &outcome.summary {
        println!("{line}");
    }
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    Ok(outcome.ok)
}
