//! Multinomial logit: utilities, probabilities, log-likelihood, analytic
//! score and maximum-likelihood estimation with finite-difference inference.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{CodedPanel, CodedTask};
use crate::mmnl::MixingReport;
use crate::numerics::{
    bfgs_minimize_with, finite_diff_jacobian, normal_two_sided_p, ConvergenceStatus, NumericsError,
    OptimizerOptions,
};

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("non-finite utility in respondent {respondent}, task {task}")]
    NonFiniteUtility { respondent: String, task: usize },
    #[error("parameter vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("task has {rows} values, not a multiple of {width} parameters")]
    RowWidth { rows: usize, width: usize },
    #[error("parameter `{0}` has no variation across alternatives in any task")]
    ZeroVariation(String),
    #[error("panel has no tasks")]
    EmptyPanel,
    #[error("simulated probability underflows for respondent {0}")]
    Underflow(String),
    #[error("unknown random parameter `{0}`")]
    UnknownRandomParameter(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("result json: {0}")]
    Json(#[from] serde_json::Error),
}

/// `V_j = x_j . beta` for every alternative of a task.
pub fn utilities(params: &[f64], task: &CodedTask) -> Vec<f64> {
    (0..task.n_alts).map(|j| task.row(j).iter().zip(params).map(|(x, b)| x * b).sum()).collect()
}

/// Softmax with max subtraction, in place. Returns `(max, ln sum exp(v - max))`;
/// the log probability of `j` is `(v_j - max) - ln_sum`, which keeps
/// near-certain choices away from zero.
pub(crate) fn softmax_in_place(v: &mut [f64]) -> (f64, f64) {
    let (arg, max) = v.iter().cloned().enumerate().fold((0, f64::NEG_INFINITY), |m, (j, x)| if x > m.1 { (j, x) } else { m });
    let mut rest = 0.0;
    for (j, x) in v.iter_mut().enumerate() {
        *x = (*x - max).exp();
        if j != arg {
            rest += *x;
        }
    }
    let sum = 1.0 + rest;
    v.iter_mut().for_each(|x| *x /= sum);
    (max, rest.ln_1p())
}

fn check_task(params: &[f64], task: &CodedTask) -> Result<(), EstimationError> {
    let width = params.len();
    if width == 0 || task.rows.len() != task.n_alts * width {
        return Err(EstimationError::RowWidth { rows: task.rows.len(), width });
    }
    Ok(())
}

/// Choice probabilities of one task.
pub fn mnl_probabilities(params: &[f64], task: &CodedTask) -> Result<Vec<f64>, EstimationError> {
    check_task(params, task)?;
    let mut v = utilities(params, task);
    if v.iter().any(|x| !x.is_finite()) {
        return Err(EstimationError::NonFiniteUtility { respondent: String::new(), task: 0 });
    }
    softmax_in_place(&mut v);
    Ok(v)
}

fn check_params(params: &[f64], panel: &CodedPanel) -> Result<(), EstimationError> {
    if params.len() != panel.width() {
        return Err(EstimationError::DimensionMismatch { expected: panel.width(), got: params.len() });
    }
    if panel.n_tasks() == 0 {
        return Err(EstimationError::EmptyPanel);
    }
    Ok(())
}

/// Log-likelihood and score of one respondent.
fn respondent_contribution(
    params: &[f64],
    id: &str,
    tasks: &[CodedTask],
    gradient: bool,
) -> Result<(f64, Vec<f64>), EstimationError> {
    let k = params.len();
    let mut ll = 0.0;
    let mut grad = if gradient { vec![0.0; k] } else { Vec::new() };
    for (t, task) in tasks.iter().enumerate() {
        check_task(params, task)?;
        let mut p = utilities(params, task);
        if p.iter().any(|x| !x.is_finite()) {
            return Err(EstimationError::NonFiniteUtility { respondent: id.to_string(), task: t });
        }
        let v_chosen = p[task.chosen];
        let (max, ln_sum) = softmax_in_place(&mut p);
        ll += (v_chosen - max) - ln_sum;
        if gradient {
            grad.iter_mut().zip(task.row(task.chosen)).for_each(|(g, x)| *g += x);
            for (j, pj) in p.iter().enumerate() {
                grad.iter_mut().zip(task.row(j)).for_each(|(g, x)| *g -= pj * x);
            }
        }
    }
    Ok((ll, grad))
}

/// Per-respondent contributions evaluated in parallel and reduced in panel
/// order.
fn panel_sum(params: &[f64], panel: &CodedPanel, gradient: bool) -> Result<(f64, Vec<f64>), EstimationError> {
    check_params(params, panel)?;
    let parts: Vec<(f64, Vec<f64>)> = panel
        .respondents
        .par_iter()
        .map(|r| respondent_contribution(params, &r.id, &r.tasks, gradient))
        .collect::<Result<_, _>>()?;
    let mut ll = 0.0;
    let mut grad = if gradient { vec![0.0; params.len()] } else { Vec::new() };
    for (l, g) in parts {
        ll += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((ll, grad))
}

/// Sum over tasks of the chosen alternative's log probability.
pub fn mnl_loglik(params: &[f64], panel: &CodedPanel) -> Result<f64, EstimationError> {
    Ok(panel_sum(params, panel, false)?.0)
}

/// Analytic score: sum over tasks of `x_chosen - sum_j P_j x_j`.
pub fn mnl_gradient(params: &[f64], panel: &CodedPanel) -> Result<Vec<f64>, EstimationError> {
    Ok(panel_sum(params, panel, true)?.1)
}

pub fn mnl_loglik_and_gradient(params: &[f64], panel: &CodedPanel) -> Result<(f64, Vec<f64>), EstimationError> {
    panel_sum(params, panel, true)
}

/// Log-likelihood of equal choice shares.
pub fn null_loglik(panel: &CodedPanel) -> f64 {
    -panel.tasks().map(|t| (t.n_alts as f64).ln()).sum::<f64>()
}

/// Fails when a column never differs across the alternatives of any task.
pub fn check_variation(panel: &CodedPanel) -> Result<(), EstimationError> {
    let width = panel.width();
    let mut varies = vec![false; width];
    for task in panel.tasks() {
        for c in 0..width {
            if !varies[c] {
                let first = task.row(0)[c];
                varies[c] = (1..task.n_alts).any(|j| task.row(j)[c] != first);
            }
        }
        if varies.iter().all(|&v| v) {
            return Ok(());
        }
    }
    match varies.iter().position(|v| !v) {
        Some(c) => Err(EstimationError::ZeroVariation(panel.names[c].clone())),
        None => Ok(()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mnl,
    Mmnl,
}

#[derive(Clone, Debug)]
pub struct EstimationOptions {
    pub optimizer: OptimizerOptions,
    /// Starting values; zeros when absent.
    pub start: Option<Vec<f64>>,
    pub std_errors: bool,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        Self { optimizer: OptimizerOptions::default(), start: None, std_errors: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimationResult {
    pub model: ModelKind,
    pub names: Vec<String>,
    pub params: Vec<f64>,
    pub std_errors: Vec<Option<f64>>,
    pub p_values: Vec<Option<f64>>,
    /// Inverse of the negative Hessian, when invertible.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub ll_null: f64,
    pub ll_final: f64,
    pub k: usize,
    pub converged: bool,
    pub status: Option<ConvergenceStatus>,
    pub iterations: usize,
    /// Log-likelihood after each accepted iteration.
    pub trace: Vec<f64>,
    pub n_tasks: usize,
    pub n_respondents: usize,
    pub mixing: Option<MixingReport>,
    /// Yen values per cost attribute overriding the schema, keyed by attribute.
    pub level_values: BTreeMap<String, Vec<f64>>,
    pub source: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterEntry {
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitBlock {
    pub ll_null: f64,
    pub ll_final: f64,
    pub k: usize,
    #[serde(default)]
    pub rho2: f64,
    #[serde(default)]
    pub rho2_adj: f64,
    #[serde(default)]
    pub converged: bool,
    #[serde(default)]
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<ConvergenceStatus>,
    #[serde(default)]
    pub n_tasks: usize,
    #[serde(default)]
    pub n_respondents: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub parameters: IndexMap<String, ParameterEntry>,
    pub fit: FitBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixing: Option<MixingReport>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub level_values: BTreeMap<String, Vec<f64>>,
    /// Base-level coefficients implied by effects coding, for reference.
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub implied: IndexMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

impl EstimationResult {
    pub fn rho2(&self) -> f64 {
        1.0 - self.ll_final / self.ll_null
    }

    pub fn rho2_adj(&self) -> f64 {
        1.0 - (self.ll_final - self.k as f64) / self.ll_null
    }

    pub fn t_stats(&self) -> Vec<Option<f64>> {
        self.params.iter().zip(&self.std_errors).map(|(b, se)| se.map(|s| b / s)).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.position(name).map(|i| self.params[i])
    }

    pub fn to_document(&self) -> ResultDocument {
        let parameters = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                (n.clone(), ParameterEntry { estimate: self.params[i], std_error: self.std_errors[i], p_value: self.p_values[i] })
            })
            .collect();
        ResultDocument {
            model: self.model,
            source: self.source.clone(),
            parameters,
            fit: FitBlock {
                ll_null: self.ll_null,
                ll_final: self.ll_final,
                k: self.k,
                rho2: self.rho2(),
                rho2_adj: self.rho2_adj(),
                converged: self.converged,
                iterations: self.iterations,
                status: self.status,
                n_tasks: self.n_tasks,
                n_respondents: self.n_respondents,
            },
            mixing: self.mixing.clone(),
            level_values: self.level_values.clone(),
            implied: IndexMap::new(),
            manifest: None,
        }
    }

    pub fn from_document(doc: ResultDocument) -> Self {
        let names: Vec<String> = doc.parameters.keys().cloned().collect();
        let params = doc.parameters.values().map(|p| p.estimate).collect();
        let std_errors = doc.parameters.values().map(|p| p.std_error).collect();
        let p_values = doc.parameters.values().map(|p| p.p_value).collect();
        Self {
            model: doc.model,
            names,
            params,
            std_errors,
            p_values,
            covariance: None,
            ll_null: doc.fit.ll_null,
            ll_final: doc.fit.ll_final,
            k: doc.fit.k,
            converged: doc.fit.converged,
            status: doc.fit.status,
            iterations: doc.fit.iterations,
            trace: Vec::new(),
            n_tasks: doc.fit.n_tasks,
            n_respondents: doc.fit.n_respondents,
            mixing: doc.mixing,
            level_values: doc.level_values,
            source: doc.source,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("result serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EstimationError> {
        Ok(Self::from_document(serde_json::from_str(text)?))
    }
}

/// Standard errors, p-values and covariance from the finite-difference
/// Hessian of a score function at `x`.
pub(crate) fn inference<G>(
    score: G,
    x: &[f64],
) -> (Vec<Option<f64>>, Vec<Option<f64>>, Option<Vec<Vec<f64>>>)
where
    G: FnMut(&[f64]) -> Option<Vec<f64>>,
{
    let n = x.len();
    let unavailable = (vec![None; n], vec![None; n], None);
    let Ok(jac) = finite_diff_jacobian(score, x, |_, xi| 1e-5 * (xi.abs() + 1.0)) else {
        return unavailable;
    };
    // negative Hessian of the log-likelihood, symmetrized
    let info = DMatrix::from_fn(n, n, |i, j| -0.5 * (jac[i][j] + jac[j][i]));
    let Some(chol) = Cholesky::new(info) else {
        return unavailable;
    };
    let cov = chol.inverse();
    let mut se = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    for i in 0..n {
        let v = cov[(i, i)];
        if v > 0.0 && v.is_finite() {
            let s = v.sqrt();
            se.push(Some(s));
            p.push(Some(normal_two_sided_p(x[i] / s)));
        } else {
            se.push(None);
            p.push(None);
        }
    }
    let rows = (0..n).map(|i| (0..n).map(|j| cov[(i, j)]).collect()).collect();
    (se, p, Some(rows))
}

/// Maximum-likelihood MNL estimation by BFGS from zeros (or `opts.start`).
pub fn estimate_mnl(panel: &CodedPanel, opts: &EstimationOptions) -> Result<EstimationResult, EstimationError> {
    let k = panel.width();
    if panel.n_tasks() == 0 {
        return Err(EstimationError::EmptyPanel);
    }
    check_variation(panel)?;
    let x0 = match &opts.start {
        Some(s) if s.len() != k => return Err(EstimationError::DimensionMismatch { expected: k, got: s.len() }),
        Some(s) => s.clone(),
        None => vec![0.0; k],
    };
    let objective = |x: &[f64]| match mnl_loglik_and_gradient(x, panel) {
        Ok((ll, g)) => (-ll, g.into_iter().map(|v| -v).collect()),
        Err(_) => (f64::NAN, vec![f64::NAN; k]),
    };
    let min = bfgs_minimize_with(objective, &x0, &opts.optimizer)?;
    let (std_errors, p_values, covariance) = if opts.std_errors {
        inference(|x| mnl_gradient(x, panel).ok(), &min.x)
    } else {
        (vec![None; k], vec![None; k], None)
    };
    Ok(EstimationResult {
        model: ModelKind::Mnl,
        names: panel.names.clone(),
        params: min.x,
        std_errors,
        p_values,
        covariance,
        ll_null: null_loglik(panel),
        ll_final: -min.f,
        k,
        converged: min.status.is_converged(),
        status: Some(min.status),
        iterations: min.iterations,
        trace: min.trace.iter().map(|f| -f).collect(),
        n_tasks: panel.n_tasks(),
        n_respondents: panel.n_respondents(),
        mixing: None,
        level_values: BTreeMap::new(),
        source: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_grad;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn task(rows: Vec<Vec<f64>>, chosen: usize) -> CodedTask {
        CodedTask::new(rows, chosen)
    }

    fn identity_task(chosen: usize) -> CodedTask {
        task(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]], chosen)
    }

    fn random_panel(seed: u64, n_resp: usize, n_tasks: usize, k: usize) -> CodedPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let respondents = (0..n_resp)
            .map(|_| {
                (0..n_tasks)
                    .map(|_| {
                        let rows = (0..3).map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
                        task(rows, rng.random_range(0..3))
                    })
                    .collect()
            })
            .collect();
        CodedPanel::from_tasks((0..k).map(|i| format!("b{i}")).collect(), respondents)
    }

    #[test]
    fn equal_utilities_give_equal_shares() {
        let p = mnl_probabilities(&[0.0, 0.0, 0.0], &identity_task(0)).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn unit_utility_matches_closed_form() {
        let p = mnl_probabilities(&[1.0, 0.0, 0.0], &identity_task(0)).unwrap();
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 2.0)).abs() < 1e-15);
        assert!((p[0] - 0.576117).abs() < 1e-6);
        assert!((p[1] - 0.211942).abs() < 1e-6);
    }

    #[test]
    fn huge_utilities_do_not_overflow() {
        let p = mnl_probabilities(&[1000.0, 999.0, -1000.0], &identity_task(0)).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_utility_is_an_error() {
        assert!(matches!(
            mnl_probabilities(&[f64::NAN, 0.0, 0.0], &identity_task(0)),
            Err(EstimationError::NonFiniteUtility { .. })
        ));
    }

    #[test]
    fn null_loglik_of_two_alternatives() {
        let panel = CodedPanel::from_tasks(vec!["a".into()], vec![vec![task(vec![vec![1.0], vec![0.0]], 1)]]);
        assert!((mnl_loglik(&[0.0], &panel).unwrap() + std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn separating_params_push_loglik_to_zero() {
        let panel = CodedPanel::from_tasks(vec!["a".into()], vec![vec![task(vec![vec![1.0], vec![0.0]], 0)]]);
        let ll = mnl_loglik(&[40.0], &panel).unwrap();
        assert!(ll < 0.0 && ll > -1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let panel = random_panel(3, 20, 4, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = mnl_gradient(&x, &panel).unwrap();
            let fd = finite_diff_grad(|p| mnl_loglik(p, &panel).unwrap(), &x, 1e-5).unwrap();
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn asc_score_at_zero_is_share_surplus() {
        // ASC columns for alternatives 0 and 1; choices 3, 2, 1 over six tasks
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]];
        let chosen = [0, 0, 0, 1, 1, 2];
        let panel = CodedPanel::from_tasks(
            vec!["asc_0".into(), "asc_1".into()],
            vec![chosen.iter().map(|&c| task(rows.clone(), c)).collect()],
        );
        let g = mnl_gradient(&[0.0, 0.0], &panel).unwrap();
        assert!((g[0] - (3.0 / 6.0 - 1.0 / 3.0) * 6.0).abs() < 1e-12);
        assert!((g[1] - (2.0 / 6.0 - 1.0 / 3.0) * 6.0).abs() < 1e-12);
    }

    #[test]
    fn binary_asc_recovers_log_odds() {
        let rows = vec![vec![1.0], vec![0.0]];
        let tasks = (0..100).map(|i| task(rows.clone(), if i < 75 { 0 } else { 1 })).collect();
        let panel = CodedPanel::from_tasks(vec!["asc_a".into()], vec![tasks]);
        let r = estimate_mnl(&panel, &EstimationOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.params[0] - 3f64.ln()).abs() < 1e-3);
        let se = r.std_errors[0].unwrap();
        // Var of log-odds = 1/(n p (1-p))
        assert!((se - (1.0f64 / (100.0 * 0.75 * 0.25)).sqrt()).abs() < 1e-4, "{se}");
    }

    #[test]
    fn zero_variation_names_the_parameter() {
        let rows = vec![vec![1.0, 0.5], vec![0.0, 0.5]];
        let panel = CodedPanel::from_tasks(vec!["asc".into(), "flat".into()], vec![vec![task(rows.clone(), 0), task(rows, 1)]]);
        match estimate_mnl(&panel, &EstimationOptions::default()) {
            Err(EstimationError::ZeroVariation(name)) => assert_eq!(name, "flat"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rho_identities_and_json_round_trip() {
        let panel = random_panel(5, 30, 3, 3);
        let r = estimate_mnl(&panel, &EstimationOptions::default()).unwrap();
        assert_eq!(r.rho2(), 1.0 - r.ll_final / r.ll_null);
        assert_eq!(r.rho2_adj(), 1.0 - (r.ll_final - r.k as f64) / r.ll_null);
        assert!(r.ll_final >= r.ll_null);
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0]));
        let back = EstimationResult::from_json(&r.to_json()).unwrap();
        assert_eq!(back.params, r.params);
        assert_eq!(back.names, r.names);
        assert_eq!(back.ll_final, r.ll_final);
    }

    #[test]
    fn random_starts_agree() {
        let panel = random_panel(12, 40, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut lls = Vec::new();
        for _ in 0..20 {
            let start: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let opts = EstimationOptions { start: Some(start), std_errors: false, ..Default::default() };
            let r = estimate_mnl(&panel, &opts).unwrap();
            assert!(r.converged);
            lls.push(r.ll_final);
        }
        for ll in &lls {
            assert!((ll - lls[0]).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn probabilities_form_a_simplex(v in proptest::collection::vec(-30.0f64..30.0, 2..6)) {
            let n = v.len();
            let rows: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|c| if c == j { 1.0 } else { 0.0 }).collect()).collect();
            let p = mnl_probabilities(&v, &task(rows, 0)).unwrap();
            prop_assert!(p.iter().all(|&x| x > 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn translation_invariance(v in proptest::collection::vec(-10.0f64..10.0, 3), c in -50.0f64..50.0) {
            // a constant column shifts every alternative's utility by c
            let rows: Vec<Vec<f64>> = (0..3).map(|j| {
                let mut r: Vec<f64> = (0..3).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
                r.push(1.0);
                r
            }).collect();
            let t = task(rows, 1);
            let mut shifted = v.clone();
            shifted.push(c);
            let mut base = v.clone();
            base.push(0.0);
            let p0 = mnl_probabilities(&base, &t).unwrap();
            let p1 = mnl_probabilities(&shifted, &t).unwrap();
            for (a, b) in p0.iter().zip(&p1) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let panel = CodedPanel::from_tasks(vec!["a".into(), "b".into(), "c".into(), "k".into()], vec![vec![t]]);
            let l0 = mnl_loglik(&base, &panel).unwrap();
            let l1 = mnl_loglik(&shifted, &panel).unwrap();
            prop_assert!((l0 - l1).abs() < 1e-10);
            let g0 = mnl_gradient(&base, &panel).unwrap();
            let g1 = mnl_gradient(&shifted, &panel).unwrap();
            for (a, b) in g0.iter().zip(&g1) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
