//! Linearizes one modulator: picks 16 of 32 drive levels so the optical
//! transfer is as straight as possible.
//!
//!     cargo run --example calibrate_mrm

use msiph::device_models::{calibrate_eo, DeviceChain};

fn main() -> msiph::Result<()> {
    let dev = DeviceChain::default();
    let carrier = 1550.0;
    let table = calibrate_eo(&dev.mrm_for(carrier), &dev.drive_levels(), carrier)?;
    print!("{}", table.to_text());
    println!(
        "raw map:        max|INL| {:.3} LSB  max|DNL| {:.3} LSB",
        table.raw_max_inl(),
        table.raw_max_dnl()
    );
    println!(
        "calibrated map: max|INL| {:.3} LSB  max|DNL| {:.3} LSB",
        table.max_inl(),
        table.max_dnl()
    );
    Ok(())
}
