//! Estimates a multinomial logit on simulated choices and prints the
//! coefficient table with implied base levels.

use std::sync::Arc;

use dce::design::{block_design, select_fraction, FractionOptions};
use dce::postest::estimation_table;
use dce::simulate::{align_params, simulate_dataset, SimConfig};
use dce::{build_parameter_index, code_dataset, estimate_mnl, fixtures, EstimationOptions, ExperimentSchema};

fn main() -> dce::Result<()> {
    let schema = Arc::new(ExperimentSchema::drone_delivery_japan());
    let design = block_design(&select_fraction(&schema, &FractionOptions::new(64, 7))?, 8, 7)?;
    let index = build_parameter_index(&schema, None)?;
    let truth = align_params(&fixtures::published_mnl(), &index)?;
    let ds = simulate_dataset(&SimConfig::new(schema.clone(), design, truth, 528, 3))?;

    let panel = code_dataset(&ds, &index)?;
    let result = estimate_mnl(&panel, &EstimationOptions::default())?;
    print!("{}", estimation_table(&result, &schema));
    Ok(())
}
