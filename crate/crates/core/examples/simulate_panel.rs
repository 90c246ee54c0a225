//! Simulates 528 respondents answering eight tasks each, with the published
//! multinomial logit coefficients as the truth.

use std::sync::Arc;

use dce::design::{block_design, select_fraction, FractionOptions};
use dce::simulate::{align_params, simulate_dataset, SimConfig};
use dce::{build_parameter_index, fixtures, ExperimentSchema};

fn main() -> dce::Result<()> {
    let schema = Arc::new(ExperimentSchema::drone_delivery_japan());
    let design = block_design(&select_fraction(&schema, &FractionOptions::new(64, 7))?, 8, 7)?;
    let index = build_parameter_index(&schema, None)?;
    let truth = align_params(&fixtures::published_mnl(), &index)?;

    let ds = simulate_dataset(&SimConfig::new(schema.clone(), design, truth, 528, 11))?;
    println!("{} respondents, {} tasks, {} rows", ds.respondents.len(), ds.n_tasks(), ds.n_rows());
    for (alt, share) in schema.alternatives.iter().zip(ds.choice_shares()) {
        println!("{:<12}{share:.3}", alt.id);
    }
    let csv = dce::dataset::choices_to_string(&ds);
    for line in csv.lines().take(4) {
        println!("{line}");
    }
    Ok(())
}
