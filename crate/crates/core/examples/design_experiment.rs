//! Builds a 64-run, 8-block design for the bundled delivery schema and
//! prints its diagnostics and the first rows of the CSV.

use dce::design::{block_design, select_fraction, FractionOptions};
use dce::ExperimentSchema;

fn main() -> dce::Result<()> {
    let schema = ExperimentSchema::drone_delivery_japan();
    let fraction = select_fraction(&schema, &FractionOptions::new(64, 7))?;
    let design = block_design(&fraction, 8, 7)?;

    let d = &design.diagnostics;
    println!("runs {}  blocks {}", design.n_runs(), design.n_blocks());
    println!("d-efficiency {:.4}", d.d_efficiency);
    println!("max |column correlation| {:.4}", d.max_abs_column_correlation);
    println!("max level imbalance {}  max block imbalance {}", d.max_level_imbalance(), d.block_balance);
    println!();
    for line in design.to_csv_string().lines().take(5) {
        println!("{line}");
    }
    Ok(())
}
