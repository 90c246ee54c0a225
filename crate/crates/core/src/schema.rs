//! Experiment schema: alternatives, attributes, levels, coding rules and the
//! parameter layout of the linear-in-parameters utility.
//!
//! Every categorical attribute is effects-coded: an attribute with `L` levels
//! produces `L - 1` columns, the last listed level is the base and codes as
//! `-1` in every column. The reference alternative carries no constant and no
//! interaction terms.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mmnl::MixingSpec;

const DEFAULT_SCHEMA_JSON: &str = include_str!("../../../schemas/drone_delivery_japan.json");

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("attribute `{attribute}` has no level `{level}`")]
    UnknownLevel { attribute: String, level: String },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("unknown alternative `{0}`")]
    UnknownAlternative(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("attribute `{0}` is not effects-coded")]
    NotEffectsCoded(String),
    #[error("invalid schema:\n{0}")]
    Invalid(ValidationReport),
    #[error("schema json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("reading schema: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlternativeDef {
    pub id: String,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub is_reference: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeScope {
    AlternativeSpecific,
    SharedAcrossAlternatives,
    Context,
    Demographic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coding {
    #[default]
    Effects,
    Linear,
}

/// One level of an attribute. `value` carries the numeric meaning (yen for
/// cost levels), `share` the population proportion of a demographic group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub share: Option<f64>,
}

impl Level {
    pub fn new(label: impl Into<String>) -> Self {
        Self { label: label.into(), value: None, share: None }
    }

    pub fn valued(label: impl Into<String>, value: f64) -> Self {
        Self { label: label.into(), value: Some(value), share: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    pub scope: AttributeScope,
    /// Alternatives the attribute belongs to; empty means all of them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub applies_to: Vec<String>,
    pub levels: Vec<Level>,
    #[serde(default)]
    pub coding: Coding,
    /// Marks the monetary attribute used to linearize the cost sensitivity.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub is_cost: bool,
}

impl AttributeDef {
    pub fn new(name: impl Into<String>, scope: AttributeScope, levels: Vec<Level>) -> Self {
        Self {
            name: name.into(),
            scope,
            applies_to: Vec::new(),
            levels,
            coding: Coding::Effects,
            is_cost: false,
        }
    }

    pub fn applying_to(mut self, alternatives: &[&str]) -> Self {
        self.applies_to = alternatives.iter().map(|a| a.to_string()).collect();
        self
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// Number of utility columns one occurrence of this attribute occupies.
    pub fn n_columns(&self) -> usize {
        match self.coding {
            Coding::Effects => self.levels.len().saturating_sub(1),
            Coding::Linear => 1,
        }
    }

    pub fn level_index(&self, label: &str) -> Result<usize, SchemaError> {
        self.levels
            .iter()
            .position(|l| l.label == label)
            .ok_or_else(|| SchemaError::UnknownLevel {
                attribute: self.name.clone(),
                level: label.to_string(),
            })
    }

    /// Coded row of the level at `index`.
    pub fn code(&self, index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_columns()];
        self.code_into(index, &mut out);
        out
    }

    pub(crate) fn code_into(&self, index: usize, out: &mut [f64]) {
        match self.coding {
            Coding::Effects => {
                let base = self.levels.len() - 1;
                if index == base {
                    out.iter_mut().for_each(|v| *v = -1.0);
                } else {
                    out.iter_mut().for_each(|v| *v = 0.0);
                    out[index] = 1.0;
                }
            }
            Coding::Linear => out[0] = self.levels[index].value.unwrap_or(f64::NAN),
        }
    }

    /// Whether the attribute is observed for alternative `alt`.
    pub fn applies(&self, alt: &str) -> bool {
        match self.scope {
            AttributeScope::AlternativeSpecific | AttributeScope::SharedAcrossAlternatives => {
                self.applies_to.is_empty() || self.applies_to.iter().any(|a| a == alt)
            }
            AttributeScope::Context | AttributeScope::Demographic => false,
        }
    }

    pub fn is_design(&self) -> bool {
        matches!(
            self.scope,
            AttributeScope::AlternativeSpecific | AttributeScope::SharedAcrossAlternatives
        )
    }
}

/// Effects-coded row for `level_label` of an effects-coded attribute.
pub fn effects_code(attr: &AttributeDef, level_label: &str) -> Result<Vec<f64>, SchemaError> {
    if attr.coding != Coding::Effects {
        return Err(SchemaError::NotEffectsCoded(attr.name.clone()));
    }
    let index = attr.level_index(level_label)?;
    Ok(attr.code(index))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub attribute: String,
    pub alternative: String,
}

impl Interaction {
    pub fn new(attribute: &str, alternative: &str) -> Self {
        Self { attribute: attribute.to_string(), alternative: alternative.to_string() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Interactions {
    #[serde(default)]
    pub context: Vec<Interaction>,
    #[serde(default)]
    pub demographic: Vec<Interaction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSchema {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub alternatives: Vec<AlternativeDef>,
    pub attributes: Vec<AttributeDef>,
    #[serde(default)]
    pub interactions: Interactions,
}

/// One column of a design: an attribute as shown for one alternative, or a
/// context attribute shown once per task.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DesignFactor {
    pub attribute: usize,
    pub alternative: Option<usize>,
}

impl ExperimentSchema {
    /// The drone / truck / motorcycle delivery schema shipped with the crate.
    pub fn drone_delivery_japan() -> Self {
        Self::from_json(DEFAULT_SCHEMA_JSON).expect("bundled schema is valid")
    }

    /// Parses and validates a schema.
    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        let schema: Self = serde_json::from_str(text)?;
        let report = validate_schema(&schema);
        if !report.is_empty() {
            return Err(SchemaError::Invalid(report));
        }
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SchemaError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn alternative_index(&self, id: &str) -> Result<usize, SchemaError> {
        self.alternatives
            .iter()
            .position(|a| a.id == id)
            .ok_or_else(|| SchemaError::UnknownAlternative(id.to_string()))
    }

    pub fn attribute_index(&self, name: &str) -> Result<usize, SchemaError> {
        self.attributes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| SchemaError::UnknownAttribute(name.to_string()))
    }

    pub fn attribute(&self, name: &str) -> Result<&AttributeDef, SchemaError> {
        Ok(&self.attributes[self.attribute_index(name)?])
    }

    pub fn reference_index(&self) -> Option<usize> {
        self.alternatives.iter().position(|a| a.is_reference)
    }

    pub fn n_alternatives(&self) -> usize {
        self.alternatives.len()
    }

    /// Design factors in CSV column order: per alternative its design
    /// attributes in schema order, then context attributes.
    pub fn design_factors(&self) -> Vec<DesignFactor> {
        let mut out = Vec::new();
        for (j, alt) in self.alternatives.iter().enumerate() {
            for (a, attr) in self.attributes.iter().enumerate() {
                if attr.applies(&alt.id) {
                    out.push(DesignFactor { attribute: a, alternative: Some(j) });
                }
            }
        }
        for (a, attr) in self.attributes.iter().enumerate() {
            if attr.scope == AttributeScope::Context {
                out.push(DesignFactor { attribute: a, alternative: None });
            }
        }
        out
    }

    pub fn factor_name(&self, factor: &DesignFactor) -> String {
        let attr = &self.attributes[factor.attribute].name;
        match factor.alternative {
            Some(j) => format!("{}.{}", self.alternatives[j].id, attr),
            None => attr.clone(),
        }
    }

    /// The cost attribute observed for alternative `alt`.
    pub fn cost_attribute(&self, alt: &str) -> Option<&AttributeDef> {
        self.attributes.iter().find(|a| a.is_cost && a.applies(alt))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    TooFewAlternatives,
    DuplicateAlternative,
    MultipleReference,
    NoReference,
    DuplicateAttribute,
    DegenerateAttribute,
    DuplicateLevel,
    UnknownAlternative,
    UnknownAttribute,
    InteractionScope,
    ReferenceInteraction,
    DuplicateInteraction,
    MissingLevelValue,
    InvalidShare,
}

impl ViolationCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::TooFewAlternatives => "too_few_alternatives",
            Self::DuplicateAlternative => "duplicate_alternative",
            Self::MultipleReference => "multiple_reference",
            Self::NoReference => "no_reference",
            Self::DuplicateAttribute => "duplicate_attribute",
            Self::DegenerateAttribute => "degenerate_attribute",
            Self::DuplicateLevel => "duplicate_level",
            Self::UnknownAlternative => "unknown_alternative",
            Self::UnknownAttribute => "unknown_attribute",
            Self::InteractionScope => "interaction_scope",
            Self::ReferenceInteraction => "reference_interaction",
            Self::DuplicateInteraction => "duplicate_interaction",
            Self::MissingLevelValue => "missing_level_value",
            Self::InvalidShare => "invalid_share",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    fn push(&mut self, code: ViolationCode, message: String) {
        self.violations.push(Violation { code, message });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{}: {}", v.code.as_str(), v.message)?;
        }
        Ok(())
    }
}

/// Checks every schema invariant and reports all violations found.
pub fn validate_schema(schema: &ExperimentSchema) -> ValidationReport {
    use ViolationCode::*;
    let mut report = ValidationReport::default();

    if schema.alternatives.len() < 2 {
        report.push(TooFewAlternatives, "a choice needs at least two alternatives".into());
    }
    let mut seen = BTreeSet::new();
    for alt in &schema.alternatives {
        if !seen.insert(alt.id.as_str()) {
            report.push(DuplicateAlternative, format!("alternative `{}` listed twice", alt.id));
        }
    }
    match schema.alternatives.iter().filter(|a| a.is_reference).count() {
        0 => report.push(NoReference, "no alternative is marked as reference".into()),
        1 => {}
        n => report.push(MultipleReference, format!("{n} alternatives are marked as reference")),
    }

    let alt_ids: BTreeSet<&str> = schema.alternatives.iter().map(|a| a.id.as_str()).collect();
    let mut names = BTreeSet::new();
    for attr in &schema.attributes {
        if !names.insert(attr.name.as_str()) {
            report.push(DuplicateAttribute, format!("attribute `{}` listed twice", attr.name));
        }
        if attr.levels.len() < 2 {
            report.push(
                DegenerateAttribute,
                format!("attribute `{}` has {} level(s), needs at least 2", attr.name, attr.levels.len()),
            );
        }
        let mut labels = BTreeSet::new();
        for level in &attr.levels {
            if !labels.insert(level.label.as_str()) {
                report.push(
                    DuplicateLevel,
                    format!("attribute `{}` repeats level `{}`", attr.name, level.label),
                );
            }
        }
        for alt in &attr.applies_to {
            if !alt_ids.contains(alt.as_str()) {
                report.push(
                    UnknownAlternative,
                    format!("attribute `{}` applies to unknown alternative `{alt}`", attr.name),
                );
            }
        }
        let needs_value = attr.coding == Coding::Linear || attr.is_cost;
        if needs_value && attr.levels.iter().any(|l| l.value.map_or(true, |v| !v.is_finite())) {
            report.push(
                MissingLevelValue,
                format!("attribute `{}` needs a finite numeric value on every level", attr.name),
            );
        }
        if attr.scope == AttributeScope::Demographic && attr.levels.iter().any(|l| l.share.is_some()) {
            let shares: Option<Vec<f64>> = attr.levels.iter().map(|l| l.share).collect();
            let ok = shares.is_some_and(|s| {
                s.iter().all(|&p| p.is_finite() && p >= 0.0) && (s.iter().sum::<f64>() - 1.0).abs() <= 1e-3
            });
            if !ok {
                report.push(
                    InvalidShare,
                    format!("attribute `{}` shares must be given for every level and sum to 1", attr.name),
                );
            }
        }
    }

    let reference = schema.alternatives.iter().find(|a| a.is_reference).map(|a| a.id.as_str());
    let mut pairs = BTreeSet::new();
    let groups = [
        (&schema.interactions.context, AttributeScope::Context),
        (&schema.interactions.demographic, AttributeScope::Demographic),
    ];
    for (list, scope) in groups {
        for inter in list.iter() {
            if !pairs.insert((inter.attribute.as_str(), inter.alternative.as_str())) {
                report.push(
                    DuplicateInteraction,
                    format!("interaction {} x {} listed twice", inter.attribute, inter.alternative),
                );
            }
            match schema.attributes.iter().find(|a| a.name == inter.attribute) {
                None => report.push(
                    UnknownAttribute,
                    format!("interaction names unknown attribute `{}`", inter.attribute),
                ),
                Some(attr) if attr.scope != scope => report.push(
                    InteractionScope,
                    format!(
                        "attribute `{}` has scope {:?} but is listed as a {:?} interaction",
                        attr.name, attr.scope, scope
                    ),
                ),
                Some(_) => {}
            }
            if !alt_ids.contains(inter.alternative.as_str()) {
                report.push(
                    UnknownAlternative,
                    format!("interaction names unknown alternative `{}`", inter.alternative),
                );
            } else if Some(inter.alternative.as_str()) == reference {
                report.push(
                    ReferenceInteraction,
                    format!(
                        "`{}` interacts with reference alternative `{}`",
                        inter.attribute, inter.alternative
                    ),
                );
            }
        }
    }
    report
}

/// What a utility column measures.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamKind {
    Asc { alternative: String },
    Attribute { attribute: String, level: Option<String> },
    Context { attribute: String, level: Option<String>, alternative: String },
    Demographic { attribute: String, level: Option<String>, alternative: String },
    StdDev { of: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
}

/// Ordered, bijective mapping between parameter names and columns. Fixed
/// (mean) parameters come first, standard deviations of random parameters
/// after them.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterIndex {
    params: Vec<ParamSpec>,
    n_fixed: usize,
    positions: HashMap<String, usize>,
    /// For each SD column, the position of the mean it perturbs.
    random_targets: Vec<usize>,
}

impl ParameterIndex {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn n_fixed(&self) -> usize {
        self.n_fixed
    }

    pub fn n_random(&self) -> usize {
        self.random_targets.len()
    }

    pub fn random_targets(&self) -> &[usize] {
        &self.random_targets
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    pub fn name(&self, position: usize) -> &str {
        &self.params[position].name
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.positions.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<usize, SchemaError> {
        self.position(name).ok_or_else(|| SchemaError::UnknownParameter(name.to_string()))
    }

    /// Index restricted to its fixed part.
    pub fn fixed_part(&self) -> ParameterIndex {
        let params = self.params[..self.n_fixed].to_vec();
        let positions = params.iter().enumerate().map(|(i, p)| (p.name.clone(), i)).collect();
        ParameterIndex { params, n_fixed: self.n_fixed, positions, random_targets: Vec::new() }
    }

    /// Positions of the `L - 1` columns of an effects-coded attribute block;
    /// `alternative` selects the interaction block for context/demographic
    /// attributes.
    pub fn block(&self, attribute: &str, alternative: Option<&str>) -> Vec<usize> {
        self.params[..self.n_fixed]
            .iter()
            .enumerate()
            .filter(|(_, p)| match (&p.kind, alternative) {
                (ParamKind::Attribute { attribute: a, .. }, None) => a == attribute,
                (ParamKind::Context { attribute: a, alternative: j, .. }, Some(alt))
                | (ParamKind::Demographic { attribute: a, alternative: j, .. }, Some(alt)) => {
                    a == attribute && j == alt
                }
                _ => false,
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Coefficient of one level of an effects-coded block, including the
    /// implied base level (negated sum of the estimated levels).
    pub fn level_coefficient(
        &self,
        params: &[f64],
        attr: &AttributeDef,
        alternative: Option<&str>,
        level: &str,
    ) -> Result<f64, SchemaError> {
        if attr.coding != Coding::Effects {
            return Err(SchemaError::NotEffectsCoded(attr.name.clone()));
        }
        let index = attr.level_index(level)?;
        let block = self.block(&attr.name, alternative);
        if block.len() != attr.n_columns() {
            return Err(SchemaError::UnknownAttribute(match alternative {
                Some(alt) => format!("{}:{alt}", attr.name),
                None => attr.name.clone(),
            }));
        }
        if index == attr.n_levels() - 1 {
            Ok(-block.iter().map(|&p| params[p]).sum::<f64>())
        } else {
            Ok(params[block[index]])
        }
    }

    fn push(&mut self, name: String, kind: ParamKind) {
        self.positions.insert(name.clone(), self.params.len());
        self.params.push(ParamSpec { name, kind });
    }
}

fn column_names(attr: &AttributeDef) -> Vec<(String, Option<String>)> {
    match attr.coding {
        Coding::Effects => attr.levels[..attr.levels.len() - 1]
            .iter()
            .map(|l| (format!("{}[{}]", attr.name, l.label), Some(l.label.clone())))
            .collect(),
        Coding::Linear => vec![(attr.name.clone(), None)],
    }
}

/// Lays out the utility parameters: constants of non-reference alternatives,
/// context interactions, design attributes, demographic interactions and, when
/// a mixing spec is given, one standard deviation per random parameter.
pub fn build_parameter_index(
    schema: &ExperimentSchema,
    mixing: Option<&MixingSpec>,
) -> Result<ParameterIndex, SchemaError> {
    let report = validate_schema(schema);
    if !report.is_empty() {
        return Err(SchemaError::Invalid(report));
    }
    let mut index = ParameterIndex {
        params: Vec::new(),
        n_fixed: 0,
        positions: HashMap::new(),
        random_targets: Vec::new(),
    };
    for alt in schema.alternatives.iter().filter(|a| !a.is_reference) {
        index.push(format!("asc_{}", alt.id), ParamKind::Asc { alternative: alt.id.clone() });
    }
    for inter in &schema.interactions.context {
        let attr = schema.attribute(&inter.attribute)?;
        for (name, level) in column_names(attr) {
            index.push(
                format!("{name}:{}", inter.alternative),
                ParamKind::Context {
                    attribute: attr.name.clone(),
                    level,
                    alternative: inter.alternative.clone(),
                },
            );
        }
    }
    for attr in schema.attributes.iter().filter(|a| a.is_design()) {
        for (name, level) in column_names(attr) {
            index.push(name, ParamKind::Attribute { attribute: attr.name.clone(), level });
        }
    }
    for inter in &schema.interactions.demographic {
        let attr = schema.attribute(&inter.attribute)?;
        for (name, level) in column_names(attr) {
            index.push(
                format!("{name}:{}", inter.alternative),
                ParamKind::Demographic {
                    attribute: attr.name.clone(),
                    level,
                    alternative: inter.alternative.clone(),
                },
            );
        }
    }
    index.n_fixed = index.params.len();
    if let Some(mixing) = mixing {
        for name in &mixing.random_params {
            let target = index.require(name)?;
            if index.random_targets.contains(&target) {
                continue;
            }
            index.random_targets.push(target);
            index.push(format!("sd_{name}"), ParamKind::StdDev { of: name.clone() });
        }
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(name: &str, scope: AttributeScope, a: &str, b: &str) -> AttributeDef {
        AttributeDef::new(name, scope, vec![Level::new(a), Level::new(b)])
    }

    fn tiny_schema() -> ExperimentSchema {
        ExperimentSchema {
            name: None,
            alternatives: vec![
                AlternativeDef { id: "a".into(), label: String::new(), is_reference: false },
                AlternativeDef { id: "b".into(), label: String::new(), is_reference: true },
            ],
            attributes: vec![binary("speed", AttributeScope::SharedAcrossAlternatives, "fast", "slow")],
            interactions: Interactions::default(),
        }
    }

    #[test]
    fn binary_effects_coding() {
        let schema = ExperimentSchema::drone_delivery_japan();
        let date = schema.attribute("delivery_date_drone").unwrap();
        assert_eq!(effects_code(date, "next_day").unwrap(), vec![1.0]);
        assert_eq!(effects_code(date, "day_after_tomorrow").unwrap(), vec![-1.0]);
    }

    #[test]
    fn base_level_codes_minus_one_everywhere() {
        let schema = ExperimentSchema::drone_delivery_japan();
        let product = schema.attribute("product_type").unwrap();
        assert_eq!(effects_code(product, "gift").unwrap(), vec![-1.0, -1.0, -1.0]);
        assert_eq!(effects_code(product, "medicine").unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn coded_levels_sum_to_zero() {
        let schema = ExperimentSchema::drone_delivery_japan();
        for attr in &schema.attributes {
            let mut sum = vec![0.0; attr.n_columns()];
            for k in 0..attr.n_levels() {
                for (s, c) in sum.iter_mut().zip(attr.code(k)) {
                    *s += c;
                }
            }
            assert!(sum.iter().all(|&s| s == 0.0), "{}", attr.name);
        }
    }

    #[test]
    fn unknown_level_names_attribute_and_label() {
        let schema = ExperimentSchema::drone_delivery_japan();
        let cost = schema.attribute("delivery_cost_drone").unwrap();
        let err = effects_code(cost, "999").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("delivery_cost_drone") && msg.contains("999"), "{msg}");
    }

    #[test]
    fn default_layout_has_38_fixed_columns() {
        let schema = ExperimentSchema::drone_delivery_japan();
        let index = build_parameter_index(&schema, None).unwrap();
        assert_eq!(index.len(), 38);
        assert_eq!(index.n_fixed(), 38);
        assert_eq!(index.name(0), "asc_drone");
        assert_eq!(index.name(1), "asc_truck");
        assert_eq!(index.name(2), "product_type[daily_goods]:drone");
        assert_eq!(index.name(37), "education_group[vocational_or_junior_college]:truck");
        assert_eq!(index.block("delivery_cost_truck", None).len(), 3);
        assert_eq!(index.block("age_group", Some("drone")).len(), 3);
    }

    #[test]
    fn random_ascs_append_two_sd_columns() {
        let schema = ExperimentSchema::drone_delivery_japan();
        let mixing = MixingSpec::random_ascs(&["asc_drone", "asc_truck"]);
        let index = build_parameter_index(&schema, Some(&mixing)).unwrap();
        assert_eq!(index.len(), 40);
        assert_eq!(index.n_fixed(), 38);
        assert_eq!(index.name(38), "sd_asc_drone");
        assert_eq!(index.random_targets(), &[0, 1]);
    }

    #[test]
    fn unknown_random_parameter_is_rejected() {
        let schema = ExperimentSchema::drone_delivery_japan();
        let mixing = MixingSpec::random_ascs(&["not_a_param"]);
        assert!(matches!(
            build_parameter_index(&schema, Some(&mixing)),
            Err(SchemaError::UnknownParameter(p)) if p == "not_a_param"
        ));
    }

    #[test]
    fn single_binary_attribute_two_alternatives() {
        let index = build_parameter_index(&tiny_schema(), None).unwrap();
        assert_eq!(index.names(), vec!["asc_a".to_string(), "speed[fast]".to_string()]);
    }

    #[test]
    fn index_is_deterministic_and_bijective() {
        let schema = ExperimentSchema::drone_delivery_japan();
        let a = build_parameter_index(&schema, None).unwrap();
        let b = build_parameter_index(&schema, None).unwrap();
        assert_eq!(a.names(), b.names());
        let unique: BTreeSet<_> = a.names().into_iter().collect();
        assert_eq!(unique.len(), a.len());
        for (i, name) in a.names().iter().enumerate() {
            assert_eq!(a.position(name), Some(i));
        }
    }

    #[test]
    fn default_schema_validates_clean() {
        let report = validate_schema(&ExperimentSchema::drone_delivery_japan());
        assert!(report.is_empty(), "{report}");
    }

    #[test]
    fn two_references_are_reported() {
        let mut schema = tiny_schema();
        schema.alternatives[0].is_reference = true;
        assert!(validate_schema(&schema).has(ViolationCode::MultipleReference));
    }

    #[test]
    fn single_level_attribute_is_degenerate() {
        let mut schema = tiny_schema();
        schema.attributes[0].levels.truncate(1);
        assert!(validate_schema(&schema).has(ViolationCode::DegenerateAttribute));
    }

    #[test]
    fn reference_alternative_interaction_is_rejected() {
        let mut schema = ExperimentSchema::drone_delivery_japan();
        schema.interactions.demographic.push(Interaction::new("gender", "motorcycle"));
        let report = validate_schema(&schema);
        assert!(report.has(ViolationCode::ReferenceInteraction), "{report}");
        assert!(build_parameter_index(&schema, None).is_err());
    }

    #[test]
    fn implied_base_coefficient_is_negated_sum() {
        let schema = ExperimentSchema::drone_delivery_japan();
        let index = build_parameter_index(&schema, None).unwrap();
        let mut params = vec![0.0; index.len()];
        for (p, v) in index.block("delivery_cost_drone", None).into_iter().zip([-1.966, -0.437, 0.508]) {
            params[p] = v;
        }
        let cost = schema.attribute("delivery_cost_drone").unwrap();
        let base = index.level_coefficient(&params, cost, None, "480").unwrap();
        assert!((base - 1.895).abs() < 1e-12);
    }

    #[test]
    fn schema_json_round_trips() {
        let schema = ExperimentSchema::drone_delivery_japan();
        let again = ExperimentSchema::from_json(&schema.to_json()).unwrap();
        assert_eq!(schema, again);
    }
}
