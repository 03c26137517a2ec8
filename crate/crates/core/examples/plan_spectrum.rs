//! Plans the carrier comb and ring radii for the three published design
//! points, then the interleaved comb used for matrix addition.
//!
//!     cargo run --example plan_spectrum

use msiph::wdm_planner::{plan_mma_spectrum, plan_wdm, validate_plan};
use msiph::{MaterialModel, PlannerConfig};

fn main() -> msiph::Result<()> {
    let mat = MaterialModel::default();
    for (channels, spacing) in [(32, 0.5), (32, 1.0), (16, 1.0)] {
        let cfg = PlannerConfig {
            channels,
            spacing_target_nm: spacing,
            ..Default::default()
        };
        let plan = plan_wdm(&cfg, &mat)?;
        let radii = &plan.mrm_radii_um;
        let (lo, hi) = radii.iter().fold((f64::MAX, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
        println!(
            "M={channels:<3} dl={spacing} nm  L_rtr={:.2} um  modes {}..{}  lambda {:.2}..{:.2} nm  r {lo:.3}..{hi:.3} um  ok={}",
            plan.rtr_perimeter_um,
            plan.rtr_modes[0],
            plan.rtr_modes[channels - 1],
            plan.lambdas_nm[0],
            plan.lambdas_nm[channels - 1],
            validate_plan(&plan).is_ok(),
        );
    }

    let plan = plan_wdm(&PlannerConfig::default(), &mat)?;
    let mma = plan_mma_spectrum(&plan, &mat)?;
    let offsets = mma.offsets_nm();
    println!(
        "MMA comb: perimeter {:.2} um, offsets {:.3}..{:.3} nm, worst residual {:.1e} nm",
        mma.perimeter_um,
        offsets.iter().cloned().fold(f64::MAX, f64::min),
        offsets.iter().cloned().fold(0.0, f64::max),
        mma.max_residual_nm
    );
    Ok(())
}
