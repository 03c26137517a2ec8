//! Inverts a diagonally dominant Gram matrix with the Neumann series, in
//! floating point and on the simulated optical pipeline.
//!
//!     cargo run --release --example neumann_inversion

use msiph::linalg_pipeline::{neumann_invert, neumann_invert_optical, MmaUnit, MmmMode, NeumannConfig, NeumannFidelity};
use msiph::mvm_engine::{EngineConfig, FidelityMode, MvmEngine};
use msiph::MaterialModel;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> msiph::Result<()> {
    let (m, n) = (8, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = DMatrix::<f64>::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
    let z: DMatrix<f64> = h.transpose() * h;

    let float = neumann_invert(&NeumannConfig { k_max: 8, ..Default::default() }, &z)?;
    println!("float residual by k: {:?}", float.residuals.iter().map(|r| format!("{r:.1e}")).collect::<Vec<_>>());

    for bits in [4, 8] {
        let engine = MvmEngine::new(EngineConfig::for_channels(m, bits)?)?;
        let mma = MmaUnit::new(&engine, &MaterialModel::default())?;
        for schedule in [MmmMode::Parallel, MmmMode::TimeMux] {
            let cfg = NeumannConfig {
                k_max: 4,
                mmm_mode: schedule,
                fidelity: NeumannFidelity::Optical(FidelityMode::Device),
                ..Default::default()
            };
            let run = neumann_invert_optical(&cfg, &z, &engine, &mma)?;
            println!(
                "{bits}-bit device, {schedule:<8}: residual {:?}, {} cycles",
                run.residuals.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>(),
                run.cycles
            );
        }
    }
    Ok(())
}
