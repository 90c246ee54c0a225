//! Synthetic respondents from known parameters: block assignment,
//! demographic sampling, individual random-coefficient draws and Gumbel
//! errors, plus a parameter-recovery harness.
//!
//! Every respondent owns three random substreams of one seeded generator, so
//! changing the respondent count or the mixing configuration leaves earlier
//! respondents' draws untouched.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{code_dataset, ChoiceDataset, DatasetError, Observation, RespondentRecord, RowCoder};
use crate::design::{BlockedDesign, DesignError};
use crate::mmnl::{estimate_mmnl, MixingSpec};
use crate::mnl::{estimate_mnl, EstimationError, EstimationOptions, EstimationResult};
use crate::schema::{build_parameter_index, AttributeScope, ExperimentSchema, ParameterIndex, SchemaError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("parameter vector has {got} entries, the layout needs {expected}")]
    Misaligned { expected: usize, got: usize },
    #[error("parameter `{0}` is missing from the supplied values")]
    MissingParameter(String),
    #[error("need at least one respondent")]
    NoRespondents,
    #[error("demographic weights for `{0}` must be non-negative and sum to 1")]
    BadWeights(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("estimation failed for simulation seed {seed}: {source}")]
    Estimation { seed: u64, source: EstimationError },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockAssignment {
    /// Every consecutive group of `B` respondents covers each block once.
    #[default]
    Balanced,
    /// Independent uniform draw per respondent.
    Uniform,
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub schema: Arc<ExperimentSchema>,
    pub design: BlockedDesign,
    /// Aligned to `build_parameter_index(schema, mixing)`: means, then SDs.
    pub true_params: Vec<f64>,
    pub mixing: Option<MixingSpec>,
    pub n_respondents: usize,
    pub seed: u64,
    /// Per demographic attribute, level probabilities; schema shares when absent.
    pub demographic_weights: Option<Vec<Vec<f64>>>,
    pub assignment: BlockAssignment,
}

impl SimConfig {
    pub fn new(
        schema: Arc<ExperimentSchema>,
        design: BlockedDesign,
        true_params: Vec<f64>,
        n_respondents: usize,
        seed: u64,
    ) -> Self {
        Self {
            schema,
            design,
            true_params,
            mixing: None,
            n_respondents,
            seed,
            demographic_weights: None,
            assignment: BlockAssignment::Balanced,
        }
    }

    pub fn with_mixing(mut self, mixing: MixingSpec) -> Self {
        self.mixing = Some(mixing);
        self
    }

    pub fn index(&self) -> Result<ParameterIndex, SimError> {
        Ok(build_parameter_index(&self.schema, self.mixing.as_ref())?)
    }

    fn weights(&self) -> Result<Vec<Vec<f64>>, SimError> {
        let demos: Vec<_> =
            self.schema.attributes.iter().filter(|a| a.scope == AttributeScope::Demographic).collect();
        let weights = match &self.demographic_weights {
            Some(w) => w.clone(),
            None => demos
                .iter()
                .map(|a| {
                    let shares: Option<Vec<f64>> = a.levels.iter().map(|l| l.share).collect();
                    shares.unwrap_or_else(|| vec![1.0 / a.n_levels() as f64; a.n_levels()])
                })
                .collect(),
        };
        if weights.len() != demos.len() {
            return Err(SimError::BadWeights(format!("{} attributes", weights.len())));
        }
        for (w, a) in weights.iter().zip(&demos) {
            let ok = w.len() == a.n_levels()
                && w.iter().all(|&p| p >= 0.0 && p.is_finite())
                && (w.iter().sum::<f64>() - 1.0).abs() <= 1e-3;
            if !ok {
                return Err(SimError::BadWeights(a.name.clone()));
            }
        }
        Ok(weights)
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn categorical(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Standard Gumbel variate by inverse CDF.
pub fn gumbel(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.sample(Open01);
    -(-u.ln()).ln()
}

/// Block of every respondent.
fn assign_blocks(cfg: &SimConfig) -> Vec<usize> {
    let b = cfg.design.n_blocks();
    match cfg.assignment {
        BlockAssignment::Balanced => {
            let mut out = Vec::with_capacity(cfg.n_respondents);
            let mut cycle = 0u64;
            while out.len() < cfg.n_respondents {
                let mut perm: Vec<usize> = (0..b).collect();
                perm.shuffle(&mut stream(cfg.seed, (1 << 62) + cycle));
                out.extend(perm);
                cycle += 1;
            }
            out.truncate(cfg.n_respondents);
            out
        }
        BlockAssignment::Uniform => {
            (0..cfg.n_respondents).map(|i| stream(cfg.seed, 3 * i as u64).random_range(0..b)).collect()
        }
    }
}

/// Simulates a panel: respondent `i` (id `i + 1`) answers every run of its
/// block, choosing the alternative with the largest `V + Gumbel`.
pub fn simulate_dataset(cfg: &SimConfig) -> Result<ChoiceDataset, SimError> {
    if cfg.n_respondents == 0 {
        return Err(SimError::NoRespondents);
    }
    let index = cfg.index()?;
    if cfg.true_params.len() != index.len() {
        return Err(SimError::Misaligned { expected: index.len(), got: cfg.true_params.len() });
    }
    cfg.design.check_against(&cfg.schema)?;
    let coder = RowCoder::new(cfg.schema.clone(), &index)?;
    let weights = cfg.weights()?;
    let blocks = assign_blocks(cfg);
    let n_fixed = index.n_fixed();
    let n_alts = cfg.schema.n_alternatives();
    let targets = index.random_targets().to_vec();

    let respondents: Vec<RespondentRecord> = (0..cfg.n_respondents)
        .into_par_iter()
        .map(|i| {
            let mut demo_rng = stream(cfg.seed, 3 * i as u64);
            if cfg.assignment == BlockAssignment::Uniform {
                let _: usize = demo_rng.random_range(0..cfg.design.n_blocks());
            }
            let demographics: Vec<usize> = weights.iter().map(|w| categorical(&mut demo_rng, w)).collect();

            let mut beta = cfg.true_params[..n_fixed].to_vec();
            let mut het_rng = stream(cfg.seed, 3 * i as u64 + 1);
            for (d, &t) in targets.iter().enumerate() {
                let z: f64 = het_rng.sample(StandardNormal);
                beta[t] += cfg.true_params[n_fixed + d] * z;
            }

            let mut noise = stream(cfg.seed, 3 * i as u64 + 2);
            let block = blocks[i];
            let tasks = cfg.design.blocks[block]
                .iter()
                .enumerate()
                .map(|(pos, &run)| {
                    let levels = cfg.design.runs[run].levels.clone();
                    let rows = coder.code_task(&levels, &demographics);
                    let mut best = (f64::NEG_INFINITY, 0);
                    for j in 0..n_alts {
                        let v: f64 = rows[j * n_fixed..(j + 1) * n_fixed].iter().zip(&beta).map(|(x, b)| x * b).sum();
                        let u = v + gumbel(&mut noise);
                        if u > best.0 {
                            best = (u, j);
                        }
                    }
                    Observation { task_id: pos as u32 + 1, block_id: block as u32 + 1, levels, chosen: best.1 }
                })
                .collect();
            RespondentRecord {
                id: (i + 1).to_string(),
                demographics,
                extra: Default::default(),
                duration: None,
                tasks,
            }
        })
        .collect();
    Ok(ChoiceDataset { schema: cfg.schema.clone(), respondents })
}

/// Orders named values along a parameter index; SD entries may be missing
/// only when `allow_missing_sd` holds, in which case they default to zero.
pub fn align_params(result: &EstimationResult, index: &ParameterIndex) -> Result<Vec<f64>, SimError> {
    index
        .names()
        .iter()
        .map(|n| result.get(n).ok_or_else(|| SimError::MissingParameter(n.clone())))
        .collect()
}

#[derive(Clone, Debug)]
pub enum Estimator {
    Mnl,
    Mmnl(MixingSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryEntry {
    pub name: String,
    pub truth: f64,
    pub estimate: f64,
    pub std_error: Option<f64>,
    /// `|estimate - truth| / std_error`; SDs compare absolute values.
    pub z: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub seed: u64,
    pub n_respondents: usize,
    pub entries: Vec<RecoveryEntry>,
    /// Pearson correlation of truth and estimate over the fixed parameters.
    pub fixed_correlation: f64,
    pub converged: bool,
    pub ll_final: f64,
}

impl RecoveryReport {
    /// Share of entries within `bound` standard errors of the truth.
    pub fn coverage(&self, bound: f64) -> f64 {
        let n = self.entries.len().max(1) as f64;
        self.entries.iter().filter(|e| e.z.is_some_and(|z| z <= bound)).count() as f64 / n
    }

    pub fn entry(&self, name: &str) -> Option<&RecoveryEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Simulates from `cfg`, re-estimates and compares estimates with the truth.
pub fn recovery_experiment(
    cfg: &SimConfig,
    estimator: &Estimator,
    opts: &EstimationOptions,
) -> Result<RecoveryReport, SimError> {
    let ds = simulate_dataset(cfg)?;
    let truth_index = cfg.index()?;
    let n_fixed = truth_index.n_fixed();
    let est_index = build_parameter_index(&cfg.schema, None)?;
    let panel = code_dataset(&ds, &est_index)?;
    let wrap = |source| SimError::Estimation { seed: cfg.seed, source };
    let result = match estimator {
        Estimator::Mnl => estimate_mnl(&panel, opts).map_err(wrap)?,
        Estimator::Mmnl(mixing) => estimate_mmnl(&panel, mixing, opts).map_err(wrap)?,
    };
    let entries: Vec<RecoveryEntry> = result
        .names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let is_sd = i >= n_fixed;
            let truth = truth_index.position(name).map_or(0.0, |p| cfg.true_params[p]);
            let truth = if is_sd { truth.abs() } else { truth };
            let estimate = result.params[i];
            let std_error = result.std_errors[i];
            RecoveryEntry { name: name.clone(), truth, estimate, std_error, z: std_error.map(|s| (estimate - truth).abs() / s) }
        })
        .collect();
    let fixed: Vec<&RecoveryEntry> = entries.iter().take(n_fixed).collect();
    let t: Vec<f64> = fixed.iter().map(|e| e.truth).collect();
    let e: Vec<f64> = fixed.iter().map(|e| e.estimate).collect();
    Ok(RecoveryReport {
        seed: cfg.seed,
        n_respondents: cfg.n_respondents,
        fixed_correlation: pearson(&t, &e),
        entries,
        converged: result.converged,
        ll_final: result.ll_final,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{choices_to_string, ingest_choices, screen_responses, ScreeningRules};
    use crate::design::{block_design, select_fraction, FractionOptions};

    fn design(schema: &ExperimentSchema) -> BlockedDesign {
        let opts = FractionOptions { iters: 200, restarts: 2, ..FractionOptions::new(64, 3) };
        block_design(&select_fraction(schema, &opts).unwrap(), 8, 3).unwrap()
    }

    fn base_config(n: usize, seed: u64) -> SimConfig {
        let schema = Arc::new(ExperimentSchema::drone_delivery_japan());
        let d = design(&schema);
        SimConfig::new(schema, d, vec![0.0; 38], n, seed)
    }

    #[test]
    fn zero_utilities_give_equal_shares() {
        let cfg = base_config(12_500, 1);
        let ds = simulate_dataset(&cfg).unwrap();
        assert_eq!(ds.n_tasks(), 100_000);
        for s in ds.choice_shares() {
            assert!((s - 1.0 / 3.0).abs() < 0.005, "{s}");
        }
    }

    #[test]
    fn strong_asc_matches_logit_share() {
        let mut cfg = base_config(12_500, 2);
        cfg.true_params[0] = 5.0;
        let share = simulate_dataset(&cfg).unwrap().choice_shares()[0];
        let e5 = 5f64.exp();
        assert!((share - e5 / (e5 + 2.0)).abs() < 0.003, "{share}");
    }

    #[test]
    fn zero_sd_mixing_matches_fixed_path() {
        let cfg = base_config(50, 3);
        let plain = simulate_dataset(&cfg).unwrap();
        let mut mixed = cfg.clone().with_mixing(MixingSpec::default());
        mixed.true_params.extend([0.0, 0.0]);
        assert_eq!(simulate_dataset(&mixed).unwrap(), plain);
    }

    #[test]
    fn seeds_drive_reproducibility() {
        let a = simulate_dataset(&base_config(40, 4)).unwrap();
        let b = simulate_dataset(&base_config(40, 4)).unwrap();
        assert_eq!(choices_to_string(&a), choices_to_string(&b));
        let c = simulate_dataset(&base_config(40, 5)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn more_respondents_keep_earlier_ones() {
        let small = simulate_dataset(&base_config(9, 6)).unwrap();
        let large = simulate_dataset(&base_config(30, 6)).unwrap();
        for (a, b) in small.respondents.iter().zip(&large.respondents) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn balanced_assignment_covers_blocks() {
        let ds = simulate_dataset(&base_config(16, 7)).unwrap();
        let mut counts = [0; 8];
        ds.respondents.iter().for_each(|r| counts[r.block_id().unwrap() as usize - 1] += 1);
        assert_eq!(counts, [2; 8]);
        assert!(ds.respondents.iter().all(|r| r.tasks.len() == 8));
    }

    #[test]
    fn output_round_trips_and_passes_default_screening() {
        let ds = simulate_dataset(&base_config(25, 8)).unwrap();
        let back = ingest_choices(choices_to_string(&ds).as_bytes(), ds.schema.clone()).unwrap();
        assert_eq!(back, ds);
        let (kept, report) = screen_responses(&ds, &ScreeningRules::default());
        assert_eq!(report.removed.len(), 0);
        assert_eq!(kept, ds);
    }

    #[test]
    fn misaligned_parameters_are_rejected() {
        let mut cfg = base_config(5, 9);
        cfg.true_params.pop();
        assert!(matches!(simulate_dataset(&cfg), Err(SimError::Misaligned { expected: 38, got: 37 })));
        cfg.true_params.push(0.0);
        cfg.n_respondents = 0;
        assert!(matches!(simulate_dataset(&cfg), Err(SimError::NoRespondents)));
    }

    #[test]
    fn demographics_follow_weights() {
        let ds = simulate_dataset(&base_config(20_000, 10)).unwrap();
        let male = ds.respondents.iter().filter(|r| r.demographics[0] == 0).count() as f64 / 20_000.0;
        assert!((male - 0.5189).abs() < 0.015, "{male}");
    }

    #[test]
    fn tiny_recovery_reports_without_crashing() {
        let cfg = base_config(10, 11);
        let report = recovery_experiment(&cfg, &Estimator::Mnl, &EstimationOptions::default()).unwrap();
        assert_eq!(report.entries.len(), 38);
        assert_eq!(report.n_respondents, 10);
    }

    #[test]
    fn gumbel_has_euler_mean() {
        let mut rng = stream(12, 0);
        let n = 200_000;
        let mean = (0..n).map(|_| gumbel(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.5772156649).abs() < 0.01, "{mean}");
    }
}
