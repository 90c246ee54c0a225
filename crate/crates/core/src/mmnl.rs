//! Panel mixed logit by maximum simulated likelihood.
//!
//! Selected fixed-part parameters become normal random coefficients,
//! `beta_i = mean + sd * z_i`, drawn once per respondent. Within a draw the
//! respondent's task probabilities multiply; the simulated likelihood is the
//! average of these products over Halton draws, held fixed across optimizer
//! iterations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{CodedPanel, CodedTask};
use crate::mnl::{
    check_variation, estimate_mnl, inference, null_loglik, softmax_in_place, utilities, EstimationError,
    EstimationOptions, EstimationResult, ModelKind,
};
use crate::numerics::{bfgs_minimize_with, halton_matrix, inv_normal_cdf, HaltonConfig};

/// Per-task log-probability floor guarding against underflow of the panel product.
pub const LOG_PROB_FLOOR: f64 = -700.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingSpec {
    /// Names of the fixed-part parameters that get a normal random term.
    pub random_params: Vec<String>,
    pub halton: HaltonConfig,
    /// Reflect every draw through all sign patterns of its coordinates, so a
    /// base point yields `2^dims` draws.
    #[serde(default)]
    pub antithetic: bool,
}

impl Default for MixingSpec {
    fn default() -> Self {
        Self::random_ascs(&["asc_drone", "asc_truck"])
    }
}

impl MixingSpec {
    pub fn random_ascs(names: &[&str]) -> Self {
        Self {
            random_params: names.iter().map(|s| s.to_string()).collect(),
            halton: HaltonConfig::default(),
            antithetic: false,
        }
    }

    pub fn none() -> Self {
        Self { random_params: Vec::new(), halton: HaltonConfig::default(), antithetic: false }
    }

    pub fn with_draws(mut self, n_draws: usize) -> Self {
        self.halton.n_draws = n_draws;
        self
    }

    pub fn n_random(&self) -> usize {
        self.random_params.len()
    }

    /// Positions of the random parameters among `names`.
    pub fn resolve(&self, names: &[String]) -> Result<Vec<usize>, EstimationError> {
        self.random_params
            .iter()
            .map(|p| {
                names.iter().position(|n| n == p).ok_or_else(|| EstimationError::UnknownRandomParameter(p.clone()))
            })
            .collect()
    }

    /// Standard normal draws for `n_individuals`, `[individual][draw][dim]`.
    pub fn draws(&self, n_individuals: usize) -> Result<MixingDraws, EstimationError> {
        let dims = self.n_random();
        if self.halton.primes.len() < dims {
            return Err(crate::numerics::NumericsError::InvalidHalton(format!(
                "{dims} random parameters need {dims} primes, got {}",
                self.halton.primes.len()
            ))
            .into());
        }
        let group = if self.antithetic { 1usize << dims } else { 1 };
        let base_draws = self.halton.n_draws.div_ceil(group);
        let cfg = HaltonConfig {
            primes: self.halton.primes[..dims].to_vec(),
            n_draws: base_draws,
            ..self.halton.clone()
        };
        let n_draws = group * base_draws;
        if dims == 0 {
            cfg.validate()?;
            return Ok(MixingDraws { z: Vec::new(), n_individuals, n_draws, dims, group });
        }
        let u = halton_matrix(&cfg, n_individuals)?;
        let mut z = Vec::with_capacity(n_individuals * n_draws * dims);
        for i in 0..n_individuals {
            for r in 0..base_draws {
                let point: Vec<f64> = u.point(i, r).iter().map(|&v| inv_normal_cdf(v)).collect::<Result<_, _>>()?;
                for mask in 0..group {
                    z.extend(point.iter().enumerate().map(|(d, v)| if mask >> d & 1 == 1 { -v } else { *v }));
                }
            }
        }
        Ok(MixingDraws { z, n_individuals, n_draws, dims, group })
    }

    pub fn report(&self, sds: Vec<f64>) -> MixingReport {
        MixingReport {
            random_params: self.random_params.clone(),
            sds,
            n_draws: self.halton.n_draws,
            primes: self.halton.primes.clone(),
            drop: self.halton.drop,
            antithetic: self.antithetic,
            scramble: self.halton.scramble,
        }
    }
}

/// Mixing block of a serialized result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub random_params: Vec<String>,
    pub sds: Vec<f64>,
    pub n_draws: usize,
    pub primes: Vec<u64>,
    pub drop: u64,
    pub antithetic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scramble: Option<u64>,
}

/// Standard normal draws, fixed for the life of an estimation.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingDraws {
    z: Vec<f64>,
    n_individuals: usize,
    n_draws: usize,
    dims: usize,
    /// Consecutive draws forming one reflection group.
    group: usize,
}

impl MixingDraws {
    /// Draws from explicit values laid out `[individual][draw][dim]`.
    pub fn from_values(z: Vec<f64>, n_individuals: usize, n_draws: usize, dims: usize) -> Self {
        assert_eq!(z.len(), n_individuals * n_draws * dims, "draw matrix shape");
        Self { z, n_individuals, n_draws, dims, group: 1 }
    }

    pub fn n_individuals(&self) -> usize {
        self.n_individuals
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn point(&self, individual: usize, draw: usize) -> &[f64] {
        let start = (individual * self.n_draws + draw) * self.dims;
        &self.z[start..start + self.dims]
    }
}

struct Layout {
    n_fixed: usize,
    targets: Vec<usize>,
}

fn layout(params: &[f64], panel: &CodedPanel, mixing: &MixingSpec, draws: &MixingDraws) -> Result<Layout, EstimationError> {
    let targets = mixing.resolve(&panel.names)?;
    let n_fixed = panel.width();
    if params.len() != n_fixed + targets.len() {
        return Err(EstimationError::DimensionMismatch { expected: n_fixed + targets.len(), got: params.len() });
    }
    if panel.n_tasks() == 0 {
        return Err(EstimationError::EmptyPanel);
    }
    if draws.dims != targets.len() || draws.n_individuals < panel.n_respondents() {
        return Err(crate::numerics::NumericsError::InvalidHalton(format!(
            "draws cover {} individuals x {} dims, panel needs {} x {}",
            draws.n_individuals,
            draws.dims,
            panel.n_respondents(),
            targets.len()
        ))
        .into());
    }
    Ok(Layout { n_fixed, targets })
}

/// Sum by halving, so permuting leaves by XOR of their index leaves the
/// result bit-identical.
fn tree_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => tree_sum(&v[..n / 2]) + tree_sum(&v[n / 2..]),
    }
}

/// `log(sum_r exp(s_r))`, each reflection group summed as a tree so that
/// negating any standard deviation leaves the result bit-identical.
fn log_sum_exp(s: &[f64], group: usize) -> f64 {
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = if group > 1 {
        s.chunks(group).map(|c| tree_sum(&c.iter().map(|v| (v - max).exp()).collect::<Vec<_>>())).sum()
    } else {
        s.iter().map(|v| (v - max).exp()).sum()
    };
    max + sum.ln()
}

struct TaskCache {
    base: Vec<f64>,
    /// `x_tj[target_d]`, `[alt][dim]`.
    random_x: Vec<f64>,
}

/// Simulated log-likelihood contribution of one respondent and, optionally,
/// its gradient.
fn respondent_msl(
    params: &[f64],
    lay: &Layout,
    id: &str,
    tasks: &[CodedTask],
    draws: &MixingDraws,
    individual: usize,
    gradient: bool,
) -> Result<(f64, Vec<f64>), EstimationError> {
    let dims = lay.targets.len();
    let mean = &params[..lay.n_fixed];
    let sd = &params[lay.n_fixed..];
    let mut caches = Vec::with_capacity(tasks.len());
    for (t, task) in tasks.iter().enumerate() {
        if task.rows.len() != task.n_alts * lay.n_fixed {
            return Err(EstimationError::RowWidth { rows: task.rows.len(), width: lay.n_fixed });
        }
        let base = utilities(mean, task);
        if base.iter().any(|v| !v.is_finite()) {
            return Err(EstimationError::NonFiniteUtility { respondent: id.to_string(), task: t });
        }
        let random_x =
            (0..task.n_alts).flat_map(|j| lay.targets.iter().map(move |&c| task.row(j)[c])).collect();
        caches.push(TaskCache { base, random_x });
    }

    let r_count = draws.n_draws;
    let mut s = vec![0.0; r_count];
    // probabilities per draw, task and alternative; mask marks floored tasks
    let mut probs: Vec<Vec<f64>> = if gradient { Vec::with_capacity(r_count) } else { Vec::new() };
    let mut masks: Vec<Vec<bool>> = if gradient { Vec::with_capacity(r_count) } else { Vec::new() };
    let mut all_floored = true;
    for (r, s_r) in s.iter_mut().enumerate() {
        let z = draws.point(individual, r);
        let shift: Vec<f64> = sd.iter().zip(z).map(|(a, b)| a * b).collect();
        let mut p_draw = Vec::new();
        let mut m_draw = Vec::new();
        for (t, (task, cache)) in tasks.iter().zip(&caches).enumerate() {
            let mut v: Vec<f64> = (0..task.n_alts)
                .map(|j| {
                    cache.base[j] + (0..dims).map(|d| shift[d] * cache.random_x[j * dims + d]).sum::<f64>()
                })
                .collect();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EstimationError::NonFiniteUtility { respondent: id.to_string(), task: t });
            }
            let vc = v[task.chosen];
            let (max, ln_sum) = softmax_in_place(&mut v);
            let lp = (vc - max) - ln_sum;
            let floored = lp < LOG_PROB_FLOOR;
            all_floored &= floored;
            *s_r += if floored { LOG_PROB_FLOOR } else { lp };
            if gradient {
                p_draw.extend_from_slice(&v);
                m_draw.push(!floored);
            }
        }
        if gradient {
            probs.push(p_draw);
            masks.push(m_draw);
        }
    }
    if all_floored {
        return Err(EstimationError::Underflow(id.to_string()));
    }
    let lse = log_sum_exp(&s, draws.group);
    let ll = lse - (r_count as f64).ln();
    if !gradient {
        return Ok((ll, Vec::new()));
    }

    let k = params.len();
    let mut grad = vec![0.0; k];
    let w: Vec<f64> = s.iter().map(|v| (v - lse).exp()).collect();
    for (t, task) in tasks.iter().enumerate() {
        let offset: usize = tasks[..t].iter().map(|x| x.n_alts).sum();
        let mut a = vec![0.0; task.n_alts];
        let mut b = 0.0;
        let mut sd_part = vec![0.0; dims];
        for r in 0..r_count {
            if !masks[r][t] {
                continue;
            }
            let p = &probs[r][offset..offset + task.n_alts];
            b += w[r];
            for (aj, pj) in a.iter_mut().zip(p) {
                *aj += w[r] * pj;
            }
            let z = draws.point(individual, r);
            for d in 0..dims {
                let xc = caches[t].random_x[task.chosen * dims + d];
                let expected: f64 = p.iter().enumerate().map(|(j, pj)| pj * caches[t].random_x[j * dims + d]).sum();
                sd_part[d] += w[r] * z[d] * (xc - expected);
            }
        }
        for (g, x) in grad[..lay.n_fixed].iter_mut().zip(task.row(task.chosen)) {
            *g += b * x;
        }
        for (j, aj) in a.iter().enumerate() {
            for (g, x) in grad[..lay.n_fixed].iter_mut().zip(task.row(j)) {
                *g -= aj * x;
            }
        }
        for d in 0..dims {
            grad[lay.n_fixed + d] += sd_part[d];
        }
    }
    Ok((ll, grad))
}

fn msl_sum(
    params: &[f64],
    panel: &CodedPanel,
    mixing: &MixingSpec,
    draws: &MixingDraws,
    gradient: bool,
) -> Result<(f64, Vec<f64>), EstimationError> {
    let lay = layout(params, panel, mixing, draws)?;
    let parts: Vec<(f64, Vec<f64>)> = panel
        .respondents
        .par_iter()
        .enumerate()
        .map(|(i, r)| respondent_msl(params, &lay, &r.id, &r.tasks, draws, i, gradient))
        .collect::<Result<_, _>>()?;
    let mut ll = 0.0;
    let mut grad = if gradient { vec![0.0; params.len()] } else { Vec::new() };
    for (l, g) in parts {
        ll += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((ll, grad))
}

/// Simulated panel log-likelihood. `params` holds the fixed part followed by
/// one standard deviation per random parameter; respondent `i` of the panel
/// uses individual `i` of `draws`.
pub fn msl_loglik(
    params: &[f64],
    panel: &CodedPanel,
    mixing: &MixingSpec,
    draws: &MixingDraws,
) -> Result<f64, EstimationError> {
    Ok(msl_sum(params, panel, mixing, draws, false)?.0)
}

/// Analytic gradient of [`msl_loglik`], including the standard deviations.
pub fn msl_gradient(
    params: &[f64],
    panel: &CodedPanel,
    mixing: &MixingSpec,
    draws: &MixingDraws,
) -> Result<Vec<f64>, EstimationError> {
    Ok(msl_sum(params, panel, mixing, draws, true)?.1)
}

pub fn msl_loglik_and_gradient(
    params: &[f64],
    panel: &CodedPanel,
    mixing: &MixingSpec,
    draws: &MixingDraws,
) -> Result<(f64, Vec<f64>), EstimationError> {
    msl_sum(params, panel, mixing, draws, true)
}

/// Starting standard deviation for every random parameter.
pub const SD_START: f64 = 0.5;

/// Maximum simulated likelihood. Starts from the MNL optimum with every
/// standard deviation at [`SD_START`] unless `opts.start` is given; reports
/// absolute standard deviations.
pub fn estimate_mmnl(
    panel: &CodedPanel,
    mixing: &MixingSpec,
    opts: &EstimationOptions,
) -> Result<EstimationResult, EstimationError> {
    let targets = mixing.resolve(&panel.names)?;
    if panel.n_tasks() == 0 {
        return Err(EstimationError::EmptyPanel);
    }
    check_variation(panel)?;
    let n_fixed = panel.width();
    let k = n_fixed + targets.len();
    let x0 = match &opts.start {
        Some(s) if s.len() != k => return Err(EstimationError::DimensionMismatch { expected: k, got: s.len() }),
        Some(s) => s.clone(),
        None => {
            let mnl_opts = EstimationOptions { std_errors: false, start: None, optimizer: opts.optimizer.clone() };
            let mut x = estimate_mnl(panel, &mnl_opts)?.params;
            x.extend(std::iter::repeat_n(SD_START, targets.len()));
            x
        }
    };
    let draws = mixing.draws(panel.n_respondents())?;
    let objective = |x: &[f64]| match msl_loglik_and_gradient(x, panel, mixing, &draws) {
        Ok((ll, g)) => (-ll, g.into_iter().map(|v| -v).collect()),
        Err(_) => (f64::NAN, vec![f64::NAN; k]),
    };
    let min = bfgs_minimize_with(objective, &x0, &opts.optimizer)?;
    let (std_errors, p_values, covariance) = if opts.std_errors {
        inference(|x| msl_gradient(x, panel, mixing, &draws).ok(), &min.x)
    } else {
        (vec![None; k], vec![None; k], None)
    };
    let mut params = min.x;
    for v in &mut params[n_fixed..] {
        *v = v.abs();
    }
    let mut names = panel.names.clone();
    names.extend(mixing.random_params.iter().map(|p| format!("sd_{p}")));
    Ok(EstimationResult {
        model: ModelKind::Mmnl,
        names,
        mixing: Some(mixing.report(params[n_fixed..].to_vec())),
        params,
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
        level_values: Default::default(),
        source: None,
    })
}

/// Draw-averaged choice probabilities of one task. `names` labels the fixed
/// part of `params`; the first `n_draws` Halton points of the mixing
/// configuration are used.
pub fn mmnl_predict(
    params: &[f64],
    task: &CodedTask,
    names: &[String],
    mixing: &MixingSpec,
    n_draws: usize,
) -> Result<Vec<f64>, EstimationError> {
    let targets = mixing.resolve(names)?;
    let n_fixed = names.len();
    if params.len() != n_fixed + targets.len() {
        return Err(EstimationError::DimensionMismatch { expected: n_fixed + targets.len(), got: params.len() });
    }
    let spec = MixingSpec { halton: HaltonConfig { n_draws, ..mixing.halton.clone() }, ..mixing.clone() };
    let draws = spec.draws(1)?;
    let mut beta = params[..n_fixed].to_vec();
    let mut out = vec![0.0; task.n_alts];
    for r in 0..draws.n_draws {
        for (d, &c) in targets.iter().enumerate() {
            beta[c] = params[c] + params[n_fixed + d] * draws.point(0, r)[d];
        }
        let p = crate::mnl::mnl_probabilities(&beta, task)?;
        out.iter_mut().zip(&p).for_each(|(o, v)| *o += v);
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}
