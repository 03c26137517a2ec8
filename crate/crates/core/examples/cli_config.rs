//! Drives the command layer from code: a config override, a run into a
//! scratch directory, and the files it leaves behind.
//!
//!     cargo run --example cli_config

use msiph::cli::{run, Command, ExperimentConfig};

fn main() -> msiph::Result<()> {
    let cfg = ExperimentConfig::parse(
        "# small inversion on the optical pipeline\n\
         invert.m = 4\n\
         invert.k_max = 3\n\
         invert.fidelity = device\n\
         engine.bits = 6\n",
    )?;
    let dir = std::env::temp_dir().join("msiph-cli-example");
    let outcome = run(Command::Invert, &cfg, &dir)?;
    for line in &outcome.summary {
        println!("{line}");
    }
    for f in &outcome.files {
        println!("--- {}", f.display());
        print!("{}", std::fs::read_to_string(f)?);
    }
    Ok(())
}
