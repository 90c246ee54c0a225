//! Simulates from known coefficients, re-estimates and reports how close the
//! estimates land.

use std::sync::Arc;

use dce::design::{block_design, select_fraction, FractionOptions};
use dce::simulate::{align_params, recovery_experiment, Estimator, SimConfig};
use dce::{build_parameter_index, fixtures, EstimationOptions, ExperimentSchema};

fn main() -> dce::Result<()> {
    let schema = Arc::new(ExperimentSchema::drone_delivery_japan());
    let design = block_design(&select_fraction(&schema, &FractionOptions::new(64, 7))?, 8, 7)?;
    let truth = align_params(&fixtures::published_mnl(), &build_parameter_index(&schema, None)?)?;
    let cfg = SimConfig::new(schema, design, truth, 528, 5);

    let report = recovery_experiment(&cfg, &Estimator::Mnl, &EstimationOptions::default())?;
    println!("correlation {:.4}, within 2 se {:.0}%", report.fixed_correlation, 100.0 * report.coverage(2.0));
    for e in report.entries.iter().take(8) {
        println!("{:<34}{:>8.3}{:>8.3}  |z| {:.2}", e.name, e.truth, e.estimate, e.z.unwrap_or(f64::NAN));
    }
    Ok(())
}
