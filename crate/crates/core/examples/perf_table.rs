//! Power, area and throughput across array sizes, the deviation from the
//! reference table, and the comparison with a digital ASIC.
//!
//!     cargo run --example perf_table

use msiph::perf_model::{diff_rows, fit_digital_overhead, perf_table, BlockBudget, TABLE_CSV_HEADER, TABLE_II, TABLE_M, TPU_V4};

fn main() {
    let budget = BlockBudget::default();
    let table = perf_table(&TABLE_M, &budget);
    println!("{TABLE_CSV_HEADER}");
    for r in &table {
        println!("{}", r.to_csv());
    }

    let worst = diff_rows(&table)
        .into_iter()
        .max_by(|a, b| a.4.abs().total_cmp(&b.4.abs()))
        .expect("reference rows");
    println!("largest deviation: M={} {} {:+.3}%", worst.0, worst.1, worst.4 * 100.0);
    println!(
        "fitted per-row digital overhead: {:.3} mW",
        fit_digital_overhead(&budget, &TABLE_II) * 1e3
    );

    let big = table.last().expect("non-empty table");
    println!(
        "M={} vs {}: {:.2}x compute density, {:.2}x energy per MAC",
        big.m,
        TPU_V4.name,
        big.density_advantage(&TPU_V4),
        big.energy_advantage(&TPU_V4).unwrap_or(f64::NAN)
    );
}
