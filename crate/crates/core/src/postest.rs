//! Post-estimation: fit indices, likelihood-ratio tests, willingness to pay
//! from linearized cost coefficients, own-cost elasticities and report
//! formatting.

use std::fmt::Write as _;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::mnl::EstimationResult;
use crate::schema::{AttributeDef, Coding, ExperimentSchema, SchemaError};

#[derive(Debug, Error)]
pub enum PostestError {
    #[error("null log-likelihood must be negative, got {0}")]
    NonNegativeNull(f64),
    #[error("log-likelihood must not be positive, got {0}")]
    PositiveLoglik(f64),
    #[error("full model log-likelihood {full} is below the restricted {restricted}; models are misordered")]
    Misordered { restricted: f64, full: f64 },
    #[error("degrees of freedom must be >= 1")]
    ZeroDf,
    #[error("alternative `{0}` has no cost attribute")]
    NoCostAttribute(String),
    #[error("cost attribute `{0}` needs at least two levels with distinct yen values")]
    DegenerateCost(String),
    #[error("result has no coefficient `{0}`")]
    MissingCoefficient(String),
    #[error("`{0}` is the cost attribute; its willingness to pay is undefined")]
    SelfReferential(String),
    #[error("attribute `{0}` has more than two levels; name a level pair")]
    NeedsLevelPair(String),
    #[error("cost slope for `{0}` is not negative")]
    NonNegativeSlope(String),
    #[error("probability must lie in (0, 1), got {0}")]
    ProbabilityDomain(f64),
    #[error("price must be positive and finite, got {0}")]
    PriceDomain(f64),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FitStats {
    pub rho2: f64,
    pub rho2_adj: f64,
}

/// `rho2 = 1 - LL/LL0`, `rho2_adj = 1 - (LL - k)/LL0`.
pub fn fit_stats(ll_final: f64, ll_null: f64, k: usize) -> Result<FitStats, PostestError> {
    if !(ll_null < 0.0) {
        return Err(PostestError::NonNegativeNull(ll_null));
    }
    if ll_final > 0.0 {
        return Err(PostestError::PositiveLoglik(ll_final));
    }
    Ok(FitStats { rho2: 1.0 - ll_final / ll_null, rho2_adj: 1.0 - (ll_final - k as f64) / ll_null })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LrTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Likelihood-ratio test of a restricted model nested in a full one.
pub fn lr_test(ll_restricted: f64, ll_full: f64, df: usize) -> Result<LrTest, PostestError> {
    if df == 0 {
        return Err(PostestError::ZeroDf);
    }
    if ll_full < ll_restricted {
        return Err(PostestError::Misordered { restricted: ll_restricted, full: ll_full });
    }
    let statistic = 2.0 * (ll_full - ll_restricted);
    let chi = ChiSquared::new(df as f64).expect("df >= 1");
    Ok(LrTest { statistic, df, p_value: chi.sf(statistic) })
}

/// Coefficients of every level of an effects-coded block, the base level
/// implied as the negated sum. `alternative` selects an interaction block.
pub fn level_coefficients(
    result: &EstimationResult,
    attr: &AttributeDef,
    alternative: Option<&str>,
) -> Result<Vec<f64>, PostestError> {
    if attr.coding != Coding::Effects {
        return Err(SchemaError::NotEffectsCoded(attr.name.clone()).into());
    }
    let suffix = alternative.map(|a| format!(":{a}")).unwrap_or_default();
    let mut out = Vec::with_capacity(attr.n_levels());
    for level in &attr.levels[..attr.n_levels() - 1] {
        let name = format!("{}[{}]{suffix}", attr.name, level.label);
        out.push(result.get(&name).ok_or(PostestError::MissingCoefficient(name))?);
    }
    out.push(-out.iter().sum::<f64>());
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostSlope {
    pub mode: String,
    pub attribute: String,
    /// `(yen, coefficient)` for every level, base level included.
    pub points: Vec<(f64, f64)>,
    /// Utility per yen.
    pub slope: f64,
    /// Fitted coefficient at the mean yen level.
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `y` on centered `x`: `(slope, intercept, r_squared)`.
fn ols(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some((slope, my, r2))
}

/// Linear cost sensitivity of `mode`: OLS of level coefficient on yen over
/// all levels including the implied base.
pub fn cost_slope(result: &EstimationResult, schema: &ExperimentSchema, mode: &str) -> Result<CostSlope, PostestError> {
    schema.alternative_index(mode)?;
    let attr = schema.cost_attribute(mode).ok_or_else(|| PostestError::NoCostAttribute(mode.to_string()))?;
    let yen: Vec<f64> = match result.level_values.get(&attr.name) {
        Some(v) if v.len() == attr.n_levels() => v.clone(),
        _ => attr.levels.iter().map(|l| l.value.unwrap_or(f64::NAN)).collect(),
    };
    if attr.n_levels() < 2 || yen.iter().any(|v| !v.is_finite()) {
        return Err(PostestError::DegenerateCost(attr.name.clone()));
    }
    let coefs = level_coefficients(result, attr, None)?;
    let points: Vec<(f64, f64)> = yen.into_iter().zip(coefs).collect();
    let (slope, intercept, r_squared) = ols(&points).ok_or_else(|| PostestError::DegenerateCost(attr.name.clone()))?;
    Ok(CostSlope { mode: mode.to_string(), attribute: attr.name.clone(), points, slope, intercept, r_squared })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WtpRequest {
    pub attribute: String,
    /// Move from `levels.0` to `levels.1`; for binary attributes the default
    /// is from the base level to the other level.
    pub levels: Option<(String, String)>,
    /// Alternative whose cost slope converts utility to yen; defaults to the
    /// attribute's own alternative, or the first alternative for shared ones.
    pub slope_mode: Option<String>,
}

impl WtpRequest {
    pub fn binary(attribute: &str) -> Self {
        Self { attribute: attribute.to_string(), levels: None, slope_mode: None }
    }

    pub fn pair(attribute: &str, from: &str, to: &str) -> Self {
        Self { attribute: attribute.to_string(), levels: Some((from.to_string(), to.to_string())), slope_mode: None }
    }

    pub fn with_slope_mode(mut self, mode: &str) -> Self {
        self.slope_mode = Some(mode.to_string());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WtpEntry {
    pub attribute: String,
    pub mode: Option<String>,
    pub from_level: String,
    pub to_level: String,
    pub delta_utility: f64,
    pub slope_mode: String,
    pub slope: f64,
    pub wtp_yen: f64,
}

fn default_slope_mode(schema: &ExperimentSchema, attr: &AttributeDef) -> String {
    match attr.applies_to.as_slice() {
        [only] => only.clone(),
        _ => schema.alternatives[0].id.clone(),
    }
}

/// `WTP = -delta_beta / slope`; for a binary effects-coded attribute
/// `delta_beta` is twice the estimated coefficient.
pub fn wtp(result: &EstimationResult, schema: &ExperimentSchema, request: &WtpRequest) -> Result<WtpEntry, PostestError> {
    let attr = schema.attribute(&request.attribute)?;
    if attr.is_cost {
        return Err(PostestError::SelfReferential(attr.name.clone()));
    }
    let coefs = level_coefficients(result, attr, None)?;
    let (from, to) = match &request.levels {
        Some((a, b)) => (attr.level_index(a)?, attr.level_index(b)?),
        None if attr.n_levels() == 2 => (1, 0),
        None => return Err(PostestError::NeedsLevelPair(attr.name.clone())),
    };
    let delta = coefs[to] - coefs[from];
    let slope_mode = request.slope_mode.clone().unwrap_or_else(|| default_slope_mode(schema, attr));
    let slope = cost_slope(result, schema, &slope_mode)?;
    if !(slope.slope < 0.0) {
        return Err(PostestError::NonNegativeSlope(slope_mode));
    }
    Ok(WtpEntry {
        attribute: attr.name.clone(),
        mode: match attr.applies_to.as_slice() {
            [only] => Some(only.clone()),
            _ => None,
        },
        from_level: attr.levels[from].label.clone(),
        to_level: attr.levels[to].label.clone(),
        delta_utility: delta,
        slope_mode,
        slope: slope.slope,
        wtp_yen: -delta / slope.slope,
    })
}

/// Every non-cost design attribute: binary ones from base to the other
/// level, multi-level ones over each pair of adjacent listed levels.
pub fn default_wtp_requests(schema: &ExperimentSchema) -> Vec<WtpRequest> {
    let mut out = Vec::new();
    for attr in schema.attributes.iter().filter(|a| a.is_design() && !a.is_cost && a.coding == Coding::Effects) {
        if attr.n_levels() == 2 {
            out.push(WtpRequest::binary(&attr.name));
        } else {
            for w in attr.levels.windows(2) {
                out.push(WtpRequest::pair(&attr.name, &w[0].label, &w[1].label));
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WtpReport {
    pub slopes: Vec<CostSlope>,
    pub entries: Vec<WtpEntry>,
}

pub fn wtp_report(
    result: &EstimationResult,
    schema: &ExperimentSchema,
    requests: &[WtpRequest],
) -> Result<WtpReport, PostestError> {
    let mut slopes = Vec::new();
    for alt in &schema.alternatives {
        if schema.cost_attribute(&alt.id).is_some() {
            slopes.push(cost_slope(result, schema, &alt.id)?);
        }
    }
    let entries = requests.iter().map(|r| wtp(result, schema, r)).collect::<Result<_, _>>()?;
    Ok(WtpReport { slopes, entries })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Elasticity {
    pub mode: String,
    pub price: f64,
    pub probability: f64,
    pub slope: f64,
    pub elasticity: f64,
    pub label: &'static str,
}

pub const EXTENSION_LABEL: &str = "extension";

/// Own-cost point elasticity `slope * price * (1 - P)` under linearized cost
/// utility.
pub fn own_cost_elasticity(slope: &CostSlope, price: f64, probability: f64) -> Result<Elasticity, PostestError> {
    if !(probability > 0.0 && probability < 1.0) {
        return Err(PostestError::ProbabilityDomain(probability));
    }
    if !(price > 0.0 && price.is_finite()) {
        return Err(PostestError::PriceDomain(price));
    }
    Ok(Elasticity {
        mode: slope.mode.clone(),
        price,
        probability,
        slope: slope.slope,
        elasticity: slope.slope * price * (1.0 - probability),
        label: EXTENSION_LABEL,
    })
}

/// A slope given directly rather than fitted.
pub fn fixed_slope(mode: &str, slope: f64) -> CostSlope {
    CostSlope { mode: mode.to_string(), attribute: String::new(), points: Vec::new(), slope, intercept: 0.0, r_squared: 1.0 }
}

/// Choice probability of `mode` as its price varies, every other utility
/// held at zero and the mode's utility at zero for the mean yen level.
pub fn price_probability_grid(slope: &CostSlope, n_alternatives: usize, prices: &[f64]) -> Vec<(f64, f64)> {
    let reference = if slope.points.is_empty() {
        0.0
    } else {
        slope.points.iter().map(|p| p.0).sum::<f64>() / slope.points.len() as f64
    };
    prices
        .iter()
        .map(|&price| {
            let v = (slope.slope * (price - reference)).exp();
            (price, v / (v + (n_alternatives as f64 - 1.0)))
        })
        .collect()
}

pub fn grid_csv(grid: &[(f64, f64)]) -> String {
    let mut s = String::from("price,probability\n");
    for (p, q) in grid {
        let _ = writeln!(s, "{p},{q:.6}");
    }
    s
}

fn parse_name(name: &str) -> Option<(&str, &str, Option<&str>)> {
    let open = name.find('[')?;
    let close = name.rfind(']')?;
    let alt = name[close + 1..].strip_prefix(':');
    Some((&name[..open], &name[open + 1..close], alt))
}

fn fmt_opt(v: Option<f64>, width: usize, prec: usize) -> String {
    match v {
        Some(x) => format!("{x:>width$.prec$}"),
        None => format!("{:>width$}", "-"),
    }
}

/// Aligned coefficient table: estimates, standard errors and p-values in
/// parameter order, implied base levels after each effects block, then the
/// fit block.
pub fn estimation_table(result: &EstimationResult, schema: &ExperimentSchema) -> String {
    let width = result.names.iter().map(String::len).max().unwrap_or(10).max(28) + 2;
    let mut s = String::new();
    let _ = writeln!(s, "{:<width$}{:>10}{:>10}{:>10}", "parameter", "coef", "se", "p-value");
    let n = result.names.len();
    for i in 0..n {
        let name = &result.names[i];
        let _ = writeln!(
            s,
            "{name:<width$}{:>10.3}{}{}",
            result.params[i],
            fmt_opt(result.std_errors[i], 10, 3),
            fmt_opt(result.p_values[i], 10, 3)
        );
        let Some((attr_name, _, alt)) = parse_name(name) else { continue };
        let next_same = result.names.get(i + 1).and_then(|m| parse_name(m)).is_some_and(|(a, _, b)| a == attr_name && b == alt);
        if next_same {
            continue;
        }
        if let Ok(attr) = schema.attribute(attr_name) {
            if let Ok(coefs) = level_coefficients(result, attr, alt) {
                let base = &attr.levels[attr.n_levels() - 1].label;
                let label = match alt {
                    Some(a) => format!("{attr_name}[{base}]:{a}"),
                    None => format!("{attr_name}[{base}]"),
                };
                let _ = writeln!(s, "{label:<width$}{:>10.3}{:>10}{:>10}", coefs[coefs.len() - 1], "(implied)", "");
            }
        }
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<width$}{:>10.3}", "LL(0)", result.ll_null);
    let _ = writeln!(s, "{:<width$}{:>10.3}", "LL(beta)", result.ll_final);
    let _ = writeln!(s, "{:<width$}{:>10}", "k", result.k);
    let _ = writeln!(s, "{:<width$}{:>10.4}", "rho2", result.rho2());
    let _ = writeln!(s, "{:<width$}{:>10.4}", "rho2 adjusted", result.rho2_adj());
    let _ = writeln!(s, "{:<width$}{:>10}", "converged", result.converged);
    s
}

pub fn wtp_table(report: &WtpReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<26}{:<44}{:>10}{:>12}{:>10}", "attribute", "change", "dbeta", "slope mode", "yen");
    for e in &report.entries {
        let change = format!("{} -> {}", e.from_level, e.to_level);
        let _ = writeln!(
            s,
            "{:<26}{:<44}{:>10.3}{:>12}{:>10.1}",
            e.attribute, change, e.delta_utility, e.slope_mode, e.wtp_yen
        );
    }
    let _ = writeln!(s);
    for c in &report.slopes {
        let _ = writeln!(s, "cost slope {:<12}{:>12.7} per yen (r2 {:.4})", c.mode, c.slope, c.r_squared);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mnl::ModelKind;
    use proptest::prelude::*;

    fn result_with(pairs: &[(&str, f64)]) -> EstimationResult {
        EstimationResult {
            model: ModelKind::Mnl,
            names: pairs.iter().map(|p| p.0.to_string()).collect(),
            params: pairs.iter().map(|p| p.1).collect(),
            std_errors: vec![None; pairs.len()],
            p_values: vec![None; pairs.len()],
            covariance: None,
            ll_null: -10.0,
            ll_final: -8.0,
            k: pairs.len(),
            converged: true,
            status: None,
            iterations: 0,
            trace: Vec::new(),
            n_tasks: 0,
            n_respondents: 0,
            mixing: None,
            level_values: Default::default(),
            source: None,
        }
    }

    fn drone_result() -> EstimationResult {
        result_with(&[
            ("delivery_cost_drone[1080]", -1.966),
            ("delivery_cost_drone[880]", -0.437),
            ("delivery_cost_drone[680]", 0.508),
            ("delivery_date_drone[next_day]", 0.489),
            ("social_influence[neighbor_30]", -0.062),
            ("social_influence[neighbor_70]", 0.124),
            ("social_influence[family_friends_30]", -0.094),
        ])
    }

    #[test]
    fn fit_stats_identities() {
        let f = fit_stats(-3641.330, -4640.540, 38).unwrap();
        assert!((f.rho2 - (1.0 - 3641.330 / 4640.540)).abs() < 1e-15);
        assert_eq!(fit_stats(-5.0, -5.0, 0).unwrap(), FitStats { rho2: 0.0, rho2_adj: 0.0 });
        assert!(fit_stats(1.0, -5.0, 0).is_err());
        assert!(fit_stats(-1.0, 0.0, 0).is_err());
    }

    #[test]
    fn lr_test_edge_cases() {
        let same = lr_test(-10.0, -10.0, 2).unwrap();
        assert_eq!(same.statistic, 0.0);
        assert_eq!(same.p_value, 1.0);
        // chi-square(2) survival is exp(-x/2)
        let t = lr_test(-10.0, -10.0 + 5.99 / 2.0, 2).unwrap();
        assert!((t.p_value - (-5.99f64 / 2.0).exp()).abs() < 1e-12);
        assert!((t.p_value - 0.05).abs() < 1e-3);
        assert!(matches!(lr_test(-5.0, -6.0, 2), Err(PostestError::Misordered { .. })));
        assert!(lr_test(-6.0, -5.0, 0).is_err());
    }

    #[test]
    fn drone_slope_and_wtp() {
        let schema = ExperimentSchema::drone_delivery_japan();
        let r = drone_result();
        let slope = cost_slope(&r, &schema, "drone").unwrap();
        // centered yen -300, -100, 100, 300; sum of squares 200000
        let sxy = -300.0 * 1.895 - 100.0 * 0.508 + 100.0 * -0.437 + 300.0 * -1.966;
        assert!((slope.slope - sxy / 200000.0).abs() < 1e-15);
        assert!((slope.slope + 0.006264).abs() < 1e-9);
        assert!(slope.intercept.abs() < 1e-12);
        let w = wtp(&r, &schema, &WtpRequest::binary("delivery_date_drone")).unwrap();
        assert!((w.delta_utility - 0.978).abs() < 1e-12);
        assert!((w.wtp_yen - 0.978 / 0.006264).abs() < 1e-6);
        let n = wtp(&r, &schema, &WtpRequest::pair("social_influence", "neighbor_30", "neighbor_70")).unwrap();
        assert_eq!(n.slope_mode, "drone");
        assert!((n.wtp_yen - 0.186 / 0.006264).abs() < 1e-6);
    }

    #[test]
    fn linear_coefficients_fit_exactly() {
        let schema = ExperimentSchema::drone_delivery_japan();
        let r = result_with(&[
            ("delivery_cost_drone[1080]", -0.6),
            ("delivery_cost_drone[880]", -0.2),
            ("delivery_cost_drone[680]", 0.2),
        ]);
        let s = cost_slope(&r, &schema, "drone").unwrap();
        assert!((s.r_squared - 1.0).abs() < 1e-12);
        assert!((s.slope + 0.002).abs() < 1e-15);
    }

    #[test]
    fn cost_attribute_has_no_wtp() {
        let schema = ExperimentSchema::drone_delivery_japan();
        assert!(matches!(
            wtp(&drone_result(), &schema, &WtpRequest::binary("delivery_cost_drone")),
            Err(PostestError::SelfReferential(_))
        ));
        assert!(matches!(
            wtp(&drone_result(), &schema, &WtpRequest::binary("social_influence")),
            Err(PostestError::NeedsLevelPair(_))
        ));
    }

    #[test]
    fn elasticity_arithmetic() {
        let s = fixed_slope("drone", -0.0062640);
        let e = own_cost_elasticity(&s, 680.0, 1.0 / 3.0).unwrap();
        assert!((e.elasticity + 2.840).abs() < 5e-4);
        assert_eq!(e.label, "extension");
        let near_one = own_cost_elasticity(&s, 680.0, 1.0 - 1e-12).unwrap();
        assert!(near_one.elasticity.abs() < 1e-9);
        let doubled = own_cost_elasticity(&s, 1360.0, 1.0 / 3.0).unwrap();
        assert!((doubled.elasticity - 2.0 * e.elasticity).abs() < 1e-12);
        assert!(own_cost_elasticity(&s, 680.0, 1.0).is_err());
        assert!(own_cost_elasticity(&s, 680.0, 0.0).is_err());
    }

    #[test]
    fn grid_is_monotone_in_price() {
        let s = fixed_slope("drone", -0.006);
        let grid = price_probability_grid(&s, 3, &[400.0, 600.0, 800.0, 1000.0]);
        assert!(grid.windows(2).all(|w| w[1].1 < w[0].1));
        assert!(grid_csv(&grid).starts_with("price,probability\n400,"));
    }

    #[test]
    fn table_lists_implied_base() {
        let schema = ExperimentSchema::drone_delivery_japan();
        let table = estimation_table(&drone_result(), &schema);
        assert!(table.contains("delivery_cost_drone[480]"));
        assert!(table.contains("1.895"));
        assert!(table.contains("social_influence[family_friends_70]"));
    }

    proptest! {
        #[test]
        fn wtp_is_scale_invariant(lambda in 0.01f64..100.0) {
            let schema = ExperimentSchema::drone_delivery_japan();
            let r = drone_result();
            let mut scaled = r.clone();
            scaled.params.iter_mut().for_each(|v| *v *= lambda);
            for req in [WtpRequest::binary("delivery_date_drone"), WtpRequest::pair("social_influence", "neighbor_30", "neighbor_70")] {
                let a = wtp(&r, &schema, &req).unwrap().wtp_yen;
                let b = wtp(&scaled, &schema, &req).unwrap().wtp_yen;
                prop_assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
            }
        }

        #[test]
        fn slope_intercept_is_zero_for_effects_blocks(c in proptest::collection::vec(-3.0f64..3.0, 3)) {
            let schema = ExperimentSchema::drone_delivery_japan();
            let r = result_with(&[
                ("delivery_cost_drone[1080]", c[0]),
                ("delivery_cost_drone[880]", c[1]),
                ("delivery_cost_drone[680]", c[2]),
            ]);
            let s = cost_slope(&r, &schema, "drone").unwrap();
            prop_assert!(s.intercept.abs() < 1e-12);
        }
    }
}
