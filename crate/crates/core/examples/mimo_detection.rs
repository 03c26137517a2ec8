//! 64x8 16-QAM uplink: symbol error rate against SNR for the exact inverse
//! and truncated Neumann series, plus a small optical run.
//!
//!     cargo run --release --example mimo_detection

use msiph::linalg_pipeline::NeumannFidelity;
use msiph::mimo_bench::{summarize, sweep, Inverter, MimoConfig, SweepConfig};
use msiph::mvm_engine::FidelityMode;

fn main() -> msiph::Result<()> {
    let base = MimoConfig { trials: 500, ..Default::default() };
    let cfg = SweepConfig::float_ks(base.clone(), vec![5.0, 10.0, 15.0, 20.0], &[1, 2, 4, 8]);
    println!("{}", msiph::mimo_bench::SweepRecord::CSV_HEADER.replace("trial", "trials"));
    for s in summarize(&sweep(&cfg)?) {
        println!("{}", s.to_csv());
    }

    let optical = SweepConfig {
        base: MimoConfig { trials: 50, ..base },
        snrs_db: vec![20.0],
        inverters: [FidelityMode::Ideal, FidelityMode::Full]
            .into_iter()
            .flat_map(|f| [2, 4].map(|k| Inverter::Neumann { k, fidelity: NeumannFidelity::Optical(f) }))
            .collect(),
        bits: 8,
    };
    for s in summarize(&sweep(&optical)?) {
        println!("{}", s.to_csv());
    }
    Ok(())
}
