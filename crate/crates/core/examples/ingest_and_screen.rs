//! Reads long-format choices from CSV, drops incomplete and straight-lining
//! respondents and codes the rest for estimation.

use std::sync::Arc;

use dce::dataset::{choices_to_string, ingest_choices, screen_responses, ScreeningRules};
use dce::design::{block_design, select_fraction, FractionOptions};
use dce::simulate::{simulate_dataset, SimConfig};
use dce::{build_parameter_index, code_dataset, ExperimentSchema};

fn main() -> dce::Result<()> {
    let schema = Arc::new(ExperimentSchema::drone_delivery_japan());
    let design = block_design(&select_fraction(&schema, &FractionOptions::new(64, 7))?, 8, 7)?;
    let k = build_parameter_index(&schema, None)?.len();
    let mut ds = simulate_dataset(&SimConfig::new(schema.clone(), design, vec![0.0; k], 40, 9))?;
    ds.respondents[0].tasks.truncate(5);
    ds.respondents[1].tasks.iter_mut().for_each(|t| t.chosen = 2);

    let csv = choices_to_string(&ds);
    let back = ingest_choices(csv.as_bytes(), schema.clone())?;
    let (kept, report) = screen_responses(&back, &ScreeningRules::all(None));
    println!(
        "{} -> {} respondents (incomplete {}, straight-line {}): removed {:?}",
        report.respondents_before, report.respondents_after, report.incomplete, report.straight_line, report.removed
    );
    let panel = code_dataset(&kept, &build_parameter_index(&schema, None)?)?;
    println!("{} coded tasks of width {}", panel.n_tasks(), panel.width());
    Ok(())
}
