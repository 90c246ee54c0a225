//! Discrete choice experiments end to end.
//!
//! - [`schema`]: alternatives, attributes, effects coding and the parameter layout.
//! - [`design`]: full factorials, D-efficient fractions and blocking.
//! - [`dataset`]: long-format choice ingestion, screening and coded panels.
//! - [`mnl`]: multinomial logit likelihood, gradient and estimation.
//! - [`mmnl`]: panel mixed logit by maximum simulated likelihood.
//! - [`postest`]: fit statistics, likelihood-ratio tests, willingness to pay and elasticities.
//! - [`simulate`]: synthetic respondents and parameter recovery.
//! - [`numerics`]: Halton draws, normal quantiles, BFGS and finite differences.
//! - [`cli`]: the `dce` command.

pub mod cli;
pub mod dataset;
pub mod design;
pub mod error;
pub mod fixtures;
pub mod mmnl;
pub mod mnl;
pub mod numerics;
pub mod postest;
pub mod schema;
pub mod simulate;

pub use dataset::{code_dataset, ingest_choices, screen_responses, ChoiceDataset, CodedPanel, CodedTask};
pub use design::{block_design, select_fraction, BlockedDesign, FractionOptions};
pub use error::{Error, Result};
pub use mmnl::{estimate_mmnl, MixingSpec};
pub use mnl::{estimate_mnl, EstimationOptions, EstimationResult};
pub use schema::{build_parameter_index, ExperimentSchema, ParameterIndex};
pub use simulate::{simulate_dataset, SimConfig};
