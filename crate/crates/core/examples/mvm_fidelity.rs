//! One random 32x32 product at every fidelity, compared with the exact
//! fixed-point result.
//!
//!     cargo run --release --example mvm_fidelity

use msiph::mvm_engine::{golden_mvm, EngineConfig, FidelityMode, MvmEngine, QuantizedMatrix, QuantizedVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> msiph::Result<()> {
    let mut cfg = EngineConfig::for_channels(32, 4)?;
    cfg.seed = 7;
    let engine = MvmEngine::new(cfg)?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = QuantizedMatrix::new(32, 32, (0..1024).map(|_| rng.gen_range(0..16)).collect(), 1.0, 4)?;
    let y = QuantizedVector::new((0..32).map(|_| rng.gen_range(0..16)).collect(), 1.0, 4)?;
    let golden = golden_mvm(&a, &y)?;
    println!("golden  {:?}", golden.codes);

    for mode in FidelityMode::ALL {
        let (out, diags) = engine.run_mvm(mode, &a, &y)?;
        let worst = diags.iter().map(|d| d.error_lsb.abs()).max().unwrap_or(0);
        let snr = diags.iter().filter_map(|d| d.snr_db).fold(f64::INFINITY, f64::min);
        print!("{mode:<7} {:?}  worst {worst} LSB", out.codes);
        if snr.is_finite() {
            print!("  min SNR {snr:.1} dB");
        }
        println!();
    }
    Ok(())
}
