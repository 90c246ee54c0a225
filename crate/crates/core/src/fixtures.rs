//! Published coefficient sets shipped with the crate, in result-document
//! form with implied base levels and cost level values.

use crate::mnl::EstimationResult;

pub const MNL_JSON: &str = include_str!("../../../fixtures/table4_mnl.json");
pub const MMNL_JSON: &str = include_str!("../../../fixtures/table4_mmnl.json");

pub fn published_mnl() -> EstimationResult {
    EstimationResult::from_json(MNL_JSON).expect("bundled fixture parses")
}

pub fn published_mmnl() -> EstimationResult {
    EstimationResult::from_json(MMNL_JSON).expect("bundled fixture parses")
}

/// Looks a fixture up by its command-line name.
pub fn by_name(name: &str) -> Option<EstimationResult> {
    match name {
        "table4" | "table4_mmnl" => Some(published_mmnl()),
        "table4_mnl" => Some(published_mnl()),
        _ => None,
    }
}
