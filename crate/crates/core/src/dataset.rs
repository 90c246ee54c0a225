//! Long-format choice data: ingestion, screening and coding into the dense
//! rows consumed by the estimators.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::schema::{AttributeScope, DesignFactor, ExperimentSchema, ParameterIndex, SchemaError};

/// One choice task answered by one respondent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Observation {
    pub task_id: u32,
    pub block_id: u32,
    /// Level index per design factor, in `ExperimentSchema::design_factors` order.
    pub levels: Vec<usize>,
    /// Index of the chosen alternative.
    pub chosen: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RespondentRecord {
    pub id: String,
    /// Level index per demographic attribute, in schema order.
    pub demographics: Vec<usize>,
    /// Pass-through respondent fields not used by the utility.
    pub extra: BTreeMap<String, String>,
    /// Completion time in seconds, when recorded.
    pub duration: Option<f64>,
    pub tasks: Vec<Observation>,
}

impl RespondentRecord {
    pub fn block_id(&self) -> Option<u32> {
        self.tasks.first().map(|t| t.block_id)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceDataset {
    pub schema: Arc<ExperimentSchema>,
    pub respondents: Vec<RespondentRecord>,
}

impl ChoiceDataset {
    pub fn n_tasks(&self) -> usize {
        self.respondents.iter().map(|r| r.tasks.len()).sum()
    }

    pub fn n_rows(&self) -> usize {
        self.n_tasks() * self.schema.n_alternatives()
    }

    /// Share of tasks won by each alternative.
    pub fn choice_shares(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.schema.n_alternatives()];
        for r in &self.respondents {
            for t in &r.tasks {
                counts[t.chosen] += 1;
            }
        }
        let n = self.n_tasks().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / n).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestErrorCode {
    MissingColumn,
    Malformed,
    MissingChosen,
    NoChoice,
    MultipleChosen,
    UnknownLevel,
    UnknownAlternative,
    UnknownDemographic,
    DuplicateAlternative,
    MissingAlternative,
    InconsistentValue,
    EmptyDataset,
}

impl IngestErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MissingColumn => "missing_column",
            Self::Malformed => "malformed",
            Self::MissingChosen => "missing_chosen",
            Self::NoChoice => "no_choice",
            Self::MultipleChosen => "multiple_chosen",
            Self::UnknownLevel => "unknown_level",
            Self::UnknownAlternative => "unknown_alternative",
            Self::UnknownDemographic => "unknown_demographic",
            Self::DuplicateAlternative => "duplicate_alternative",
            Self::MissingAlternative => "missing_alternative",
            Self::InconsistentValue => "inconsistent_value",
            Self::EmptyDataset => "empty_dataset",
        }
    }
}

impl fmt::Display for IngestErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{code} (line {line}): {message}")]
    Ingest { code: IngestErrorCode, line: u64, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("index does not match the schema: {0}")]
    IndexMismatch(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

impl DatasetError {
    pub fn code(&self) -> Option<IngestErrorCode> {
        match self {
            Self::Ingest { code, .. } => Some(*code),
            _ => None,
        }
    }

    fn at(code: IngestErrorCode, line: u64, message: impl Into<String>) -> Self {
        Self::Ingest { code, line, message: message.into() }
    }
}

const ID_COLUMNS: [&str; 5] = ["respondent_id", "task_id", "block_id", "alt_id", "chosen"];
pub const DURATION_COLUMN: &str = "duration_seconds";

/// Compares respondent ids numerically when both parse as integers.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}

struct Columns {
    index: HashMap<String, usize>,
}

impl Columns {
    fn new(header: &csv::StringRecord) -> Self {
        Self { index: header.iter().enumerate().map(|(i, h)| (h.trim().to_string(), i)).collect() }
    }

    fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    fn require(&self, name: &str) -> Result<usize, DatasetError> {
        self.get(name).ok_or_else(|| {
            DatasetError::at(IngestErrorCode::MissingColumn, 1, format!("missing column `{name}`"))
        })
    }
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn field<'r>(record: &'r csv::StringRecord, col: usize) -> &'r str {
    record.get(col).unwrap_or("").trim()
}

/// Respondent-level fields: demographics, pass-through columns and duration.
#[derive(Default)]
struct RespondentFields {
    demographics: Vec<Option<usize>>,
    extra: BTreeMap<String, String>,
    duration: Option<f64>,
}

struct RespondentColumns {
    demographic: Vec<(usize, usize)>,
    extra: Vec<(String, usize)>,
    duration: Option<usize>,
}

impl RespondentColumns {
    fn new(schema: &ExperimentSchema, cols: &Columns, taken: &[&str], need_demographics: bool) -> Result<Self, DatasetError> {
        let mut demographic = Vec::new();
        for (a, attr) in schema.attributes.iter().enumerate() {
            if attr.scope == AttributeScope::Demographic {
                match cols.get(&attr.name) {
                    Some(c) => demographic.push((a, c)),
                    None if need_demographics => {
                        return Err(DatasetError::at(
                            IngestErrorCode::MissingColumn,
                            1,
                            format!("missing column `{}`", attr.name),
                        ))
                    }
                    None => {}
                }
            }
        }
        let mut extra: Vec<(String, usize)> = cols
            .index
            .iter()
            .filter(|(name, _)| {
                !taken.contains(&name.as_str())
                    && name.as_str() != DURATION_COLUMN
                    && schema.attributes.iter().all(|a| &a.name != *name)
            })
            .map(|(n, &c)| (n.clone(), c))
            .collect();
        extra.sort();
        Ok(Self { demographic, extra, duration: cols.get(DURATION_COLUMN) })
    }

    fn read(
        &self,
        schema: &ExperimentSchema,
        record: &csv::StringRecord,
        who: &str,
        into: &mut RespondentFields,
    ) -> Result<(), DatasetError> {
        let line = line_of(record);
        let demo_attrs: Vec<usize> = schema
            .attributes
            .iter()
            .enumerate()
            .filter(|(_, a)| a.scope == AttributeScope::Demographic)
            .map(|(i, _)| i)
            .collect();
        if into.demographics.is_empty() {
            into.demographics = vec![None; demo_attrs.len()];
        }
        for &(a, col) in &self.demographic {
            let attr = &schema.attributes[a];
            let label = field(record, col);
            let level = attr.level_index(label).map_err(|_| {
                DatasetError::at(
                    IngestErrorCode::UnknownDemographic,
                    line,
                    format!("respondent {who}: `{label}` is not a group of `{}`", attr.name),
                )
            })?;
            let slot = demo_attrs.iter().position(|&d| d == a).expect("demographic attribute");
            match into.demographics[slot] {
                Some(prev) if prev != level => {
                    return Err(DatasetError::at(
                        IngestErrorCode::InconsistentValue,
                        line,
                        format!("respondent {who}: `{}` changes between rows", attr.name),
                    ))
                }
                _ => into.demographics[slot] = Some(level),
            }
        }
        for (name, col) in &self.extra {
            let value = field(record, *col).to_string();
            match into.extra.get(name) {
                Some(prev) if *prev != value => {
                    return Err(DatasetError::at(
                        IngestErrorCode::InconsistentValue,
                        line,
                        format!("respondent {who}: `{name}` changes between rows"),
                    ))
                }
                _ => {
                    into.extra.insert(name.clone(), value);
                }
            }
        }
        if let Some(col) = self.duration {
            let raw = field(record, col);
            if !raw.is_empty() {
                let d: f64 = raw.parse().map_err(|_| {
                    DatasetError::at(IngestErrorCode::Malformed, line, format!("bad {DURATION_COLUMN} `{raw}`"))
                })?;
                if into.duration.is_some_and(|p| p != d) {
                    return Err(DatasetError::at(
                        IngestErrorCode::InconsistentValue,
                        line,
                        format!("respondent {who}: {DURATION_COLUMN} changes between rows"),
                    ));
                }
                into.duration = Some(d);
            }
        }
        Ok(())
    }
}

struct PendingTask {
    respondent: usize,
    task_id: u32,
    block_id: u32,
    first_line: u64,
    levels: Vec<Option<usize>>,
    seen: Vec<bool>,
    chosen: Vec<(usize, u64)>,
}

/// Reads the long-format choice CSV: one row per (task, alternative).
pub fn ingest_choices<R: Read>(reader: R, schema: Arc<ExperimentSchema>) -> Result<ChoiceDataset, DatasetError> {
    ingest_impl(reader, None::<&[u8]>, schema)
}

/// Reads choices with demographics supplied by a companion respondent-level
/// CSV keyed by `respondent_id`.
pub fn ingest_choices_with_demographics<R: Read, D: Read>(
    choices: R,
    demographics: D,
    schema: Arc<ExperimentSchema>,
) -> Result<ChoiceDataset, DatasetError> {
    ingest_impl(choices, Some(demographics), schema)
}

fn ingest_impl<R: Read, D: Read>(
    reader: R,
    companion: Option<D>,
    schema: Arc<ExperimentSchema>,
) -> Result<ChoiceDataset, DatasetError> {
    use IngestErrorCode as C;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let cols = Columns::new(rdr.headers()?);
    let id_cols: Vec<usize> = ID_COLUMNS.iter().map(|c| cols.require(c)).collect::<Result<_, _>>()?;
    let (c_resp, c_task, c_block, c_alt, c_chosen) = (id_cols[0], id_cols[1], id_cols[2], id_cols[3], id_cols[4]);

    let factors = schema.design_factors();
    let mut attr_cols: HashMap<usize, usize> = HashMap::new();
    for f in &factors {
        let name = &schema.attributes[f.attribute].name;
        attr_cols.insert(f.attribute, cols.require(name)?);
    }
    let resp_cols = RespondentColumns::new(&schema, &cols, &ID_COLUMNS, companion.is_none())?;

    let n_alts = schema.n_alternatives();
    let mut respondent_pos: HashMap<String, usize> = HashMap::new();
    let mut respondents: Vec<(String, RespondentFields, Vec<PendingTask>, u64)> = Vec::new();
    let mut task_pos: HashMap<(usize, u32), usize> = HashMap::new();

    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        let who = field(&record, c_resp).to_string();
        if who.is_empty() {
            return Err(DatasetError::at(C::Malformed, line, "empty respondent_id"));
        }
        let parse_u32 = |col: usize, what: &str| -> Result<u32, DatasetError> {
            field(&record, col)
                .parse()
                .map_err(|_| DatasetError::at(C::Malformed, line, format!("bad {what} `{}`", field(&record, col))))
        };
        let task_id = parse_u32(c_task, "task_id")?;
        let block_id = parse_u32(c_block, "block_id")?;
        let alt_label = field(&record, c_alt);
        let alt = schema.alternative_index(alt_label).map_err(|_| {
            DatasetError::at(C::UnknownAlternative, line, format!("unknown alternative `{alt_label}`"))
        })?;
        let chosen = match field(&record, c_chosen) {
            "1" => true,
            "0" => false,
            "" => {
                return Err(DatasetError::at(
                    C::MissingChosen,
                    line,
                    format!("respondent {who} task {task_id}: chosen flag is empty"),
                ))
            }
            other => {
                return Err(DatasetError::at(C::Malformed, line, format!("chosen must be 0 or 1, got `{other}`")))
            }
        };

        let r = *respondent_pos.entry(who.clone()).or_insert_with(|| {
            respondents.push((who.clone(), RespondentFields::default(), Vec::new(), line));
            respondents.len() - 1
        });
        resp_cols.read(&schema, &record, &who, &mut respondents[r].1)?;
        let tasks = &mut respondents[r].2;
        let t = *task_pos.entry((r, task_id)).or_insert_with(|| {
            tasks.push(PendingTask {
                respondent: r,
                task_id,
                block_id,
                first_line: line,
                levels: vec![None; factors.len()],
                seen: vec![false; n_alts],
                chosen: Vec::new(),
            });
            tasks.len() - 1
        });
        let task = &mut tasks[t];
        if task.block_id != block_id {
            return Err(DatasetError::at(
                C::InconsistentValue,
                line,
                format!("respondent {who} task {task_id}: block_id changes within the task"),
            ));
        }
        if task.seen[alt] {
            return Err(DatasetError::at(
                C::DuplicateAlternative,
                line,
                format!("respondent {who} task {task_id}: alternative `{alt_label}` appears twice"),
            ));
        }
        task.seen[alt] = true;
        if chosen {
            task.chosen.push((alt, line));
        }
        for (fi, f) in factors.iter().enumerate() {
            if f.alternative.is_some_and(|j| j != alt) {
                continue;
            }
            let attr = &schema.attributes[f.attribute];
            let label = field(&record, attr_cols[&f.attribute]);
            let level = attr.level_index(label).map_err(|_| {
                DatasetError::at(
                    C::UnknownLevel,
                    line,
                    format!("attribute `{}` has no level `{label}`", attr.name),
                )
            })?;
            match task.levels[fi] {
                Some(prev) if prev != level => {
                    return Err(DatasetError::at(
                        C::InconsistentValue,
                        line,
                        format!("respondent {who} task {task_id}: `{}` differs across alternatives", attr.name),
                    ))
                }
                _ => task.levels[fi] = Some(level),
            }
        }
    }

    if respondents.is_empty() {
        return Err(DatasetError::at(C::EmptyDataset, 1, "no choice rows"));
    }

    if let Some(companion) = companion {
        let mut rdr = csv::Reader::from_reader(companion);
        let dcols = Columns::new(rdr.headers()?);
        let c_id = dcols.require("respondent_id")?;
        let dresp = RespondentColumns::new(&schema, &dcols, &["respondent_id"], true)?;
        for record in rdr.records() {
            let record = record?;
            let who = field(&record, c_id).to_string();
            if let Some(&r) = respondent_pos.get(&who) {
                dresp.read(&schema, &record, &who, &mut respondents[r].1)?;
            }
        }
    }

    let mut out = Vec::with_capacity(respondents.len());
    for (id, fields, tasks, first_line) in respondents {
        let demographics = fields
            .demographics
            .iter()
            .enumerate()
            .map(|(k, d)| {
                d.ok_or_else(|| {
                    let name = schema
                        .attributes
                        .iter()
                        .filter(|a| a.scope == AttributeScope::Demographic)
                        .nth(k)
                        .map_or("", |a| a.name.as_str());
                    DatasetError::at(C::UnknownDemographic, first_line, format!("respondent {id}: no `{name}` group"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut observations = Vec::with_capacity(tasks.len());
        for task in tasks {
            debug_assert_eq!(task.respondent, out.len());
            if let Some(missing) = task.seen.iter().position(|s| !s) {
                return Err(DatasetError::at(
                    C::MissingAlternative,
                    task.first_line,
                    format!(
                        "respondent {id} task {}: alternative `{}` has no row",
                        task.task_id, schema.alternatives[missing].id
                    ),
                ));
            }
            let chosen = match task.chosen.as_slice() {
                [] => {
                    return Err(DatasetError::at(
                        C::NoChoice,
                        task.first_line,
                        format!("respondent {id} task {}: no alternative chosen", task.task_id),
                    ))
                }
                [(alt, _)] => *alt,
                [_, (_, second), ..] => {
                    return Err(DatasetError::at(
                        C::MultipleChosen,
                        *second,
                        format!("respondent {id} task {}: more than one alternative chosen", task.task_id),
                    ))
                }
            };
            let levels = task.levels.iter().map(|l| l.expect("every factor read")).collect();
            observations.push(Observation { task_id: task.task_id, block_id: task.block_id, levels, chosen });
        }
        let demographics = if demographics.is_empty() { Vec::new() } else { demographics };
        out.push(RespondentRecord {
            id,
            demographics,
            extra: fields.extra,
            duration: fields.duration,
            tasks: observations,
        });
    }
    Ok(ChoiceDataset { schema, respondents: out })
}

/// Writes the long-format CSV read by [`ingest_choices`].
pub fn write_choices<W: Write>(ds: &ChoiceDataset, writer: W) -> Result<(), DatasetError> {
    let schema = &ds.schema;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let factors = schema.design_factors();
    let design_attrs: Vec<usize> = {
        let mut seen: Vec<usize> = Vec::new();
        for (a, attr) in schema.attributes.iter().enumerate() {
            if attr.is_design() || attr.scope == AttributeScope::Context {
                seen.push(a);
            }
        }
        seen
    };
    let demo_attrs: Vec<&str> = schema
        .attributes
        .iter()
        .filter(|a| a.scope == AttributeScope::Demographic)
        .map(|a| a.name.as_str())
        .collect();
    let extra_keys: Vec<String> = {
        let mut keys: Vec<String> = ds.respondents.iter().flat_map(|r| r.extra.keys().cloned()).collect();
        keys.sort();
        keys.dedup();
        keys
    };
    let has_duration = ds.respondents.iter().any(|r| r.duration.is_some());

    let mut header: Vec<String> = ID_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(design_attrs.iter().map(|&a| schema.attributes[a].name.clone()));
    header.extend(demo_attrs.iter().map(|s| s.to_string()));
    header.extend(extra_keys.iter().cloned());
    if has_duration {
        header.push(DURATION_COLUMN.into());
    }
    w.write_record(&header)?;

    let demo_defs: Vec<_> = schema.attributes.iter().filter(|a| a.scope == AttributeScope::Demographic).collect();
    for r in &ds.respondents {
        for t in &r.tasks {
            for (j, alt) in schema.alternatives.iter().enumerate() {
                let mut row = vec![
                    r.id.clone(),
                    t.task_id.to_string(),
                    t.block_id.to_string(),
                    alt.id.clone(),
                    if t.chosen == j { "1".into() } else { "0".into() },
                ];
                for &a in &design_attrs {
                    let fi = factors.iter().position(|f| {
                        f.attribute == a && (f.alternative.is_none() || f.alternative == Some(j))
                    });
                    row.push(fi.map_or(String::new(), |fi| schema.attributes[a].levels[t.levels[fi]].label.clone()));
                }
                for (k, attr) in demo_defs.iter().enumerate() {
                    row.push(r.demographics.get(k).map_or(String::new(), |&l| attr.levels[l].label.clone()));
                }
                for key in &extra_keys {
                    row.push(r.extra.get(key).cloned().unwrap_or_default());
                }
                if has_duration {
                    row.push(r.duration.map_or(String::new(), |d| d.to_string()));
                }
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn choices_to_string(ds: &ChoiceDataset) -> String {
    let mut buf = Vec::new();
    write_choices(ds, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("utf-8")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScreeningRules {
    /// Drop respondents with fewer tasks than their block holds.
    pub incomplete: bool,
    /// Drop respondents choosing the same alternative in every task.
    pub straight_line: bool,
    /// Drop respondents faster than this many seconds, when a duration is recorded.
    pub fast_completion: Option<f64>,
    /// Expected tasks per respondent; inferred per block when absent.
    pub tasks_per_respondent: Option<usize>,
}

impl Default for ScreeningRules {
    fn default() -> Self {
        Self { incomplete: true, straight_line: false, fast_completion: None, tasks_per_respondent: None }
    }
}

impl ScreeningRules {
    pub fn all(fast_completion: Option<f64>) -> Self {
        Self { incomplete: true, straight_line: true, fast_completion, tasks_per_respondent: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ScreeningReport {
    pub respondents_before: usize,
    pub respondents_after: usize,
    pub incomplete: usize,
    pub straight_line: usize,
    pub fast_completion: usize,
    pub removed: Vec<String>,
}

/// Applies the enabled rules; a respondent failing several rules counts
/// toward each of them but is removed once.
pub fn screen_responses(ds: &ChoiceDataset, rules: &ScreeningRules) -> (ChoiceDataset, ScreeningReport) {
    let mut expected: HashMap<Option<u32>, usize> = HashMap::new();
    for r in &ds.respondents {
        let e = expected.entry(r.block_id()).or_insert(0);
        *e = (*e).max(r.tasks.len());
    }
    let mut report = ScreeningReport { respondents_before: ds.respondents.len(), ..Default::default() };
    let mut kept = Vec::new();
    for r in &ds.respondents {
        let need = rules.tasks_per_respondent.unwrap_or_else(|| expected[&r.block_id()]);
        let incomplete = rules.incomplete && r.tasks.len() < need;
        let straight = rules.straight_line
            && r.tasks.len() >= 2
            && r.tasks.iter().all(|t| t.chosen == r.tasks[0].chosen);
        let fast = match (rules.fast_completion, r.duration) {
            (Some(limit), Some(d)) => d < limit,
            _ => false,
        };
        report.incomplete += incomplete as usize;
        report.straight_line += straight as usize;
        report.fast_completion += fast as usize;
        if incomplete || straight || fast {
            report.removed.push(r.id.clone());
        } else {
            kept.push(r.clone());
        }
    }
    report.respondents_after = kept.len();
    (ChoiceDataset { schema: ds.schema.clone(), respondents: kept }, report)
}

/// One choice task as dense rows, one per alternative.
#[derive(Clone, Debug, PartialEq)]
pub struct CodedTask {
    pub n_alts: usize,
    /// Row-major `n_alts x width`.
    pub rows: Vec<f64>,
    pub chosen: usize,
}

impl CodedTask {
    pub fn new(rows: Vec<Vec<f64>>, chosen: usize) -> Self {
        let n_alts = rows.len();
        Self { n_alts, rows: rows.into_iter().flatten().collect(), chosen }
    }

    pub fn width(&self) -> usize {
        self.rows.len() / self.n_alts.max(1)
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let w = self.width();
        &self.rows[j * w..(j + 1) * w]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CodedRespondent {
    pub id: String,
    pub tasks: Vec<CodedTask>,
}

/// Coded panel aligned to the fixed part of a parameter index, respondents
/// sorted by id.
#[derive(Clone, Debug, PartialEq)]
pub struct CodedPanel {
    pub names: Vec<String>,
    pub respondents: Vec<CodedRespondent>,
}

impl CodedPanel {
    /// Builds a panel from raw tasks; respondent ids are `1..=n`.
    pub fn from_tasks(names: Vec<String>, respondents: Vec<Vec<CodedTask>>) -> Self {
        let respondents = respondents
            .into_iter()
            .enumerate()
            .map(|(i, tasks)| CodedRespondent { id: (i + 1).to_string(), tasks })
            .collect();
        Self { names, respondents }
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.respondents.iter().map(|r| r.tasks.len()).sum()
    }

    pub fn n_respondents(&self) -> usize {
        self.respondents.len()
    }

    pub fn tasks(&self) -> impl Iterator<Item = &CodedTask> {
        self.respondents.iter().flat_map(|r| r.tasks.iter())
    }

    /// Every task as its own respondent.
    pub fn split_tasks(&self) -> Self {
        let tasks: Vec<Vec<CodedTask>> = self.tasks().map(|t| vec![t.clone()]).collect();
        Self::from_tasks(self.names.clone(), tasks)
    }
}

/// Maps a task's levels onto dense rows for a given parameter index.
#[derive(Clone, Debug)]
pub struct RowCoder {
    schema: Arc<ExperimentSchema>,
    width: usize,
    factors: Vec<DesignFactor>,
    /// Per alternative: ASC position.
    asc: Vec<Option<usize>>,
    /// Per alternative: (factor index, block positions) for its design attributes.
    design: Vec<Vec<(usize, Vec<usize>)>>,
    /// Per alternative: (factor index, block positions) for context interactions.
    context: Vec<Vec<(usize, Vec<usize>)>>,
    /// Per alternative: (demographic slot, attribute index, block positions).
    demographic: Vec<Vec<(usize, usize, Vec<usize>)>>,
}

impl RowCoder {
    pub fn new(schema: Arc<ExperimentSchema>, index: &ParameterIndex) -> Result<Self, DatasetError> {
        let factors = schema.design_factors();
        let n_alts = schema.n_alternatives();
        let width = index.n_fixed();
        let check = |block: Vec<usize>, attr: &crate::schema::AttributeDef, what: &str| {
            if block.len() == attr.n_columns() && block.iter().all(|&p| p < width) {
                Ok(block)
            } else {
                Err(DatasetError::IndexMismatch(format!("no {what} block for `{}`", attr.name)))
            }
        };
        let demo_attrs: Vec<usize> = schema
            .attributes
            .iter()
            .enumerate()
            .filter(|(_, a)| a.scope == AttributeScope::Demographic)
            .map(|(i, _)| i)
            .collect();

        let mut asc = vec![None; n_alts];
        let mut design = vec![Vec::new(); n_alts];
        let mut context = vec![Vec::new(); n_alts];
        let mut demographic = vec![Vec::new(); n_alts];
        for (j, alt) in schema.alternatives.iter().enumerate() {
            if !alt.is_reference {
                let name = format!("asc_{}", alt.id);
                asc[j] = Some(
                    index.position(&name).ok_or_else(|| DatasetError::IndexMismatch(format!("no `{name}`")))?,
                );
            }
            for (fi, f) in factors.iter().enumerate() {
                if f.alternative == Some(j) {
                    let attr = &schema.attributes[f.attribute];
                    design[j].push((fi, check(index.block(&attr.name, None), attr, "attribute")?));
                }
            }
            for inter in schema.interactions.context.iter().filter(|i| i.alternative == alt.id) {
                let a = schema.attribute_index(&inter.attribute)?;
                let fi = factors
                    .iter()
                    .position(|f| f.attribute == a && f.alternative.is_none())
                    .ok_or_else(|| DatasetError::IndexMismatch(format!("`{}` is not a context factor", inter.attribute)))?;
                let attr = &schema.attributes[a];
                context[j].push((fi, check(index.block(&attr.name, Some(&alt.id)), attr, "context")?));
            }
            for inter in schema.interactions.demographic.iter().filter(|i| i.alternative == alt.id) {
                let a = schema.attribute_index(&inter.attribute)?;
                let slot = demo_attrs.iter().position(|&d| d == a).ok_or_else(|| {
                    DatasetError::IndexMismatch(format!("`{}` is not demographic", inter.attribute))
                })?;
                let attr = &schema.attributes[a];
                demographic[j].push((slot, a, check(index.block(&attr.name, Some(&alt.id)), attr, "demographic")?));
            }
        }
        Ok(Self { schema, width, factors, asc, design, context, demographic })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Dense rows of one task, row-major by alternative.
    pub fn code_task(&self, levels: &[usize], demographics: &[usize]) -> Vec<f64> {
        let n_alts = self.asc.len();
        let mut rows = vec![0.0; n_alts * self.width];
        for j in 0..n_alts {
            let row = &mut rows[j * self.width..(j + 1) * self.width];
            if let Some(p) = self.asc[j] {
                row[p] = 1.0;
            }
            for (fi, block) in self.design[j].iter().chain(&self.context[j]) {
                let attr = &self.schema.attributes[self.factors[*fi].attribute];
                for (&p, v) in block.iter().zip(attr.code(levels[*fi])) {
                    row[p] = v;
                }
            }
            for (slot, a, block) in &self.demographic[j] {
                let attr = &self.schema.attributes[*a];
                for (&p, v) in block.iter().zip(attr.code(demographics[*slot])) {
                    row[p] = v;
                }
            }
        }
        rows
    }

    /// Recovers design-factor levels from coded rows; `None` for factors no
    /// row carries (e.g. a context attribute without interactions).
    pub fn decode_levels(&self, task: &CodedTask) -> Vec<Option<usize>> {
        let mut out = vec![None; self.factors.len()];
        for j in 0..task.n_alts {
            let row = task.row(j);
            for (fi, block) in self.design[j].iter().chain(&self.context[j]) {
                let attr = &self.schema.attributes[self.factors[*fi].attribute];
                let coded: Vec<f64> = block.iter().map(|&p| row[p]).collect();
                out[*fi] = (0..attr.n_levels()).find(|&k| attr.code(k) == coded);
            }
        }
        out
    }

    /// Recovers demographic levels; `None` for groups without interactions.
    pub fn decode_demographics(&self, task: &CodedTask, n_slots: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n_slots];
        for j in 0..task.n_alts {
            let row = task.row(j);
            for (slot, a, block) in &self.demographic[j] {
                let attr = &self.schema.attributes[*a];
                let coded: Vec<f64> = block.iter().map(|&p| row[p]).collect();
                out[*slot] = (0..attr.n_levels()).find(|&k| attr.code(k) == coded);
            }
        }
        out
    }
}

/// Codes every task against the fixed part of `index`.
pub fn code_dataset(ds: &ChoiceDataset, index: &ParameterIndex) -> Result<CodedPanel, DatasetError> {
    let coder = RowCoder::new(ds.schema.clone(), index)?;
    let mut respondents: Vec<CodedRespondent> = ds
        .respondents
        .iter()
        .map(|r| CodedRespondent {
            id: r.id.clone(),
            tasks: r
                .tasks
                .iter()
                .map(|t| CodedTask {
                    n_alts: ds.schema.n_alternatives(),
                    rows: coder.code_task(&t.levels, &r.demographics),
                    chosen: t.chosen,
                })
                .collect(),
        })
        .collect();
    respondents.sort_by(|a, b| compare_ids(&a.id, &b.id));
    let names = index.names()[..index.n_fixed()].to_vec();
    Ok(CodedPanel { names, respondents })
}
