//! Blocked fractional-factorial stated-choice designs.
//!
//! A run is a joint profile: every alternative's design attributes plus the
//! context attributes are assigned a level. Runs are chosen under an exact
//! level-balance constraint and improved by level swaps within a factor, each
//! accepted swap strictly increasing `det(X'X)` of the effects-coded matrix.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{Cholesky, DMatrix};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::schema::{ExperimentSchema, SchemaError};

pub const DEFAULT_FACTORIAL_CAP: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("full factorial has {size} combinations, above the cap of {cap}")]
    TooLarge { size: u128, cap: usize },
    #[error("{n_runs} runs cannot identify {columns} coded columns; at least {minimum} runs are needed")]
    Infeasible { n_runs: usize, columns: usize, minimum: usize },
    #[error("blocks must divide runs ({runs} runs, {blocks} blocks)")]
    BlocksDoNotDivide { runs: usize, blocks: usize },
    #[error("design has no runs")]
    Empty,
    #[error("no orthogonal array fits {n_runs} runs with these factors")]
    NoOrthogonalArray { n_runs: usize },
    #[error("design csv line {line}: {detail}")]
    Malformed { line: u64, detail: String },
    #[error("design does not match the schema: {0}")]
    SchemaMismatch(String),
    #[error("design csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("writing design: {0}")]
    Io(#[from] std::io::Error),
}

/// A design column together with its coding.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FactorInfo {
    pub name: String,
    pub attribute: String,
    pub alternative: Option<String>,
    pub levels: Vec<String>,
    #[serde(skip)]
    codes: Vec<Vec<f64>>,
}

impl FactorInfo {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn n_columns(&self) -> usize {
        self.codes[0].len()
    }

    pub fn code(&self, level: usize) -> &[f64] {
        &self.codes[level]
    }
}

/// Factors of a schema in CSV column order.
pub fn factor_infos(schema: &ExperimentSchema) -> Vec<FactorInfo> {
    schema
        .design_factors()
        .iter()
        .map(|f| {
            let attr = &schema.attributes[f.attribute];
            FactorInfo {
                name: schema.factor_name(f),
                attribute: attr.name.clone(),
                alternative: f.alternative.map(|j| schema.alternatives[j].id.clone()),
                levels: attr.levels.iter().map(|l| l.label.clone()).collect(),
                codes: (0..attr.n_levels()).map(|k| attr.code(k)).collect(),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Profile {
    /// Level index per factor.
    pub levels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DesignDiagnostics {
    /// Per factor, the largest absolute deviation of a level count from `n / L`.
    pub level_balance: Vec<(String, f64)>,
    /// Largest within-block deviation of a level count from its proportional share.
    pub block_balance: f64,
    /// Largest |correlation| between coded columns of different factors.
    pub max_abs_column_correlation: f64,
    /// `det(X'X / n)^(1/k)`; zero when singular.
    pub d_efficiency: f64,
    pub singular: bool,
}

impl DesignDiagnostics {
    pub fn max_level_imbalance(&self) -> f64 {
        self.level_balance.iter().fold(0.0, |m, (_, v)| m.max(*v))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockedDesign {
    pub factors: Vec<FactorInfo>,
    pub runs: Vec<Profile>,
    /// Run indices per block, ascending.
    pub blocks: Vec<Vec<usize>>,
    pub seed: u64,
    pub diagnostics: DesignDiagnostics,
    pub warnings: Vec<String>,
}

impl BlockedDesign {
    /// Wraps runs into a single-block design and computes diagnostics.
    pub fn from_runs(factors: Vec<FactorInfo>, runs: Vec<Profile>, seed: u64) -> Result<Self, DesignError> {
        if runs.is_empty() {
            return Err(DesignError::Empty);
        }
        let blocks = vec![(0..runs.len()).collect()];
        let mut design = Self {
            factors,
            runs,
            blocks,
            seed,
            diagnostics: DesignDiagnostics {
                level_balance: Vec::new(),
                block_balance: 0.0,
                max_abs_column_correlation: 0.0,
                d_efficiency: 0.0,
                singular: false,
            },
            warnings: Vec::new(),
        };
        design.diagnostics = design_diagnostics(&design)?;
        Ok(design)
    }

    pub fn n_runs(&self) -> usize {
        self.runs.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Block id of each run.
    pub fn block_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.runs.len()];
        for (b, runs) in self.blocks.iter().enumerate() {
            for &r in runs {
                out[r] = b;
            }
        }
        out
    }

    /// Checks that the design's factors are the schema's design factors.
    pub fn check_against(&self, schema: &ExperimentSchema) -> Result<(), DesignError> {
        let expected = factor_infos(schema);
        if expected.len() != self.factors.len() {
            return Err(DesignError::SchemaMismatch(format!(
                "schema has {} design factors, design has {}",
                expected.len(),
                self.factors.len()
            )));
        }
        for (e, f) in expected.iter().zip(&self.factors) {
            if e.name != f.name || e.levels != f.levels {
                return Err(DesignError::SchemaMismatch(format!("factor `{}` differs", f.name)));
            }
        }
        Ok(())
    }

    /// CSV with `run_id`, `block_id` (both 1-based) and one column of level
    /// labels per factor.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DesignError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        let mut header = vec!["run_id".to_string(), "block_id".to_string()];
        header.extend(self.factors.iter().map(|f| f.name.clone()));
        w.write_record(&header)?;
        let block_of = self.block_of();
        for (r, run) in self.runs.iter().enumerate() {
            let mut record = vec![(r + 1).to_string(), (block_of[r] + 1).to_string()];
            record.extend(run.levels.iter().zip(&self.factors).map(|(&l, f)| f.levels[l].clone()));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 labels")
    }

    pub fn read_csv<R: Read>(schema: &ExperimentSchema, reader: R) -> Result<Self, DesignError> {
        let factors = factor_infos(schema);
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let column = |name: &str| {
            header.iter().position(|h| h == name).ok_or_else(|| DesignError::Malformed {
                line: 1,
                detail: format!("missing column `{name}`"),
            })
        };
        let run_col = column("run_id")?;
        let block_col = column("block_id")?;
        let factor_cols: Vec<usize> = factors.iter().map(|f| column(&f.name)).collect::<Result<_, _>>()?;

        let mut rows: Vec<(usize, usize, Profile)> = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let parse = |col: usize, what: &str| -> Result<usize, DesignError> {
                record
                    .get(col)
                    .and_then(|v| v.trim().parse::<usize>().ok())
                    .filter(|&v| v >= 1)
                    .ok_or_else(|| DesignError::Malformed { line, detail: format!("bad {what}") })
            };
            let run = parse(run_col, "run_id")?;
            let block = parse(block_col, "block_id")?;
            let mut levels = Vec::with_capacity(factors.len());
            for (f, &col) in factors.iter().zip(&factor_cols) {
                let label = record.get(col).unwrap_or("");
                let level = f.levels.iter().position(|l| l == label).ok_or_else(|| DesignError::Malformed {
                    line,
                    detail: format!("factor `{}` has no level `{label}`", f.name),
                })?;
                levels.push(level);
            }
            rows.push((run, block, Profile { levels }));
        }
        if rows.is_empty() {
            return Err(DesignError::Empty);
        }
        rows.sort_by_key(|r| r.0);
        for (i, r) in rows.iter().enumerate() {
            if r.0 != i + 1 {
                return Err(DesignError::Malformed { line: 0, detail: "run ids must be 1..=n".into() });
            }
        }
        let n_blocks = rows.iter().map(|r| r.1).max().unwrap_or(1);
        let mut blocks = vec![Vec::new(); n_blocks];
        for (i, r) in rows.iter().enumerate() {
            blocks[r.1 - 1].push(i);
        }
        if blocks.iter().any(Vec::is_empty) {
            return Err(DesignError::Malformed { line: 0, detail: "block ids must be 1..=B".into() });
        }
        let runs = rows.into_iter().map(|r| r.2).collect();
        let mut design = Self::from_runs(factors, runs, 0)?;
        design.blocks = blocks;
        design.diagnostics = design_diagnostics(&design)?;
        Ok(design)
    }
}

/// Cartesian product of one alternative's design-attribute levels, last
/// attribute varying fastest.
pub fn full_factorial(schema: &ExperimentSchema, alternative: &str) -> Result<Vec<Vec<usize>>, DesignError> {
    full_factorial_capped(schema, alternative, DEFAULT_FACTORIAL_CAP)
}

pub fn full_factorial_capped(
    schema: &ExperimentSchema,
    alternative: &str,
    cap: usize,
) -> Result<Vec<Vec<usize>>, DesignError> {
    let alt = &schema.alternatives[schema.alternative_index(alternative)?];
    let sizes: Vec<usize> =
        schema.attributes.iter().filter(|a| a.applies(&alt.id)).map(|a| a.n_levels()).collect();
    let size = sizes.iter().map(|&s| s as u128).product::<u128>();
    if size > cap as u128 {
        return Err(DesignError::TooLarge { size, cap });
    }
    let mut out = Vec::with_capacity(size as usize);
    let mut current = vec![0usize; sizes.len()];
    for _ in 0..size {
        out.push(current.clone());
        for d in (0..sizes.len()).rev() {
            current[d] += 1;
            if current[d] < sizes[d] {
                break;
            }
            current[d] = 0;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StartKind {
    /// Orthogonal-array start when the run size admits one, random otherwise.
    #[default]
    Auto,
    Random,
    OrthogonalArray,
}

#[derive(Clone, Debug)]
pub struct FractionOptions {
    pub n_runs: usize,
    pub seed: u64,
    /// Swap proposals per restart.
    pub iters: usize,
    pub restarts: usize,
    pub start: StartKind,
}

impl FractionOptions {
    pub fn new(n_runs: usize, seed: u64) -> Self {
        Self { n_runs, seed, iters: 2_000, restarts: 8, start: StartKind::Auto }
    }
}

fn coded_width(factors: &[FactorInfo]) -> usize {
    factors.iter().map(FactorInfo::n_columns).sum()
}

fn coded_matrix(factors: &[FactorInfo], runs: &[Profile]) -> Vec<f64> {
    let k = coded_width(factors);
    let mut x = Vec::with_capacity(runs.len() * k);
    for run in runs {
        for (f, &l) in factors.iter().zip(&run.levels) {
            x.extend_from_slice(f.code(l));
        }
    }
    x
}

fn cross_product(x: &[f64], n: usize, k: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(k, k);
    for r in 0..n {
        let row = &x[r * k..(r + 1) * k];
        for i in 0..k {
            if row[i] == 0.0 {
                continue;
            }
            for j in 0..k {
                a[(i, j)] += row[i] * row[j];
            }
        }
    }
    a
}

/// Log-determinant of a symmetric matrix, `None` when numerically singular.
fn log_det(a: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
    let max_diag = (0..a.nrows()).fold(0.0f64, |m, i| m.max(a[(i, i)]));
    let chol = Cholesky::new(a.clone())?;
    let l = chol.l_dirty();
    let mut ld = 0.0;
    for i in 0..a.nrows() {
        let d = l[(i, i)];
        if !(d * d > 1e-10 * max_diag) {
            return None;
        }
        ld += 2.0 * d.ln();
    }
    Some((ld, chol.inverse()))
}

/// Balance, correlation and D-efficiency of a design.
pub fn design_diagnostics(design: &BlockedDesign) -> Result<DesignDiagnostics, DesignError> {
    let n = design.runs.len();
    if n == 0 {
        return Err(DesignError::Empty);
    }
    let factors = &design.factors;
    let level_counts: Vec<Vec<usize>> = factors
        .iter()
        .enumerate()
        .map(|(fi, f)| {
            let mut c = vec![0; f.n_levels()];
            design.runs.iter().for_each(|r| c[r.levels[fi]] += 1);
            c
        })
        .collect();
    let level_balance = factors
        .iter()
        .zip(&level_counts)
        .map(|(f, counts)| {
            let target = n as f64 / f.n_levels() as f64;
            (f.name.clone(), counts.iter().fold(0.0f64, |m, &c| m.max((c as f64 - target).abs())))
        })
        .collect();

    let mut block_balance = 0.0f64;
    for block in &design.blocks {
        for (fi, f) in factors.iter().enumerate() {
            let mut c = vec![0usize; f.n_levels()];
            block.iter().for_each(|&r| c[design.runs[r].levels[fi]] += 1);
            for (l, &count) in c.iter().enumerate() {
                let share = block.len() as f64 * level_counts[fi][l] as f64 / n as f64;
                block_balance = block_balance.max((count as f64 - share).abs());
            }
        }
    }

    let k = coded_width(factors);
    let x = coded_matrix(factors, &design.runs);
    let owner: Vec<usize> =
        factors.iter().enumerate().flat_map(|(fi, f)| std::iter::repeat_n(fi, f.n_columns())).collect();
    let means: Vec<f64> = (0..k).map(|c| (0..n).map(|r| x[r * k + c]).sum::<f64>() / n as f64).collect();
    let mut centered = x.clone();
    for r in 0..n {
        for c in 0..k {
            centered[r * k + c] -= means[c];
        }
    }
    let cov = cross_product(&centered, n, k);
    let mut max_corr = 0.0f64;
    for i in 0..k {
        for j in (i + 1)..k {
            if owner[i] == owner[j] {
                continue;
            }
            let denom = (cov[(i, i)] * cov[(j, j)]).sqrt();
            if denom > 0.0 {
                max_corr = max_corr.max((cov[(i, j)] / denom).abs());
            }
        }
    }

    let mut m = cross_product(&x, n, k);
    m /= n as f64;
    let (d_efficiency, singular) = match log_det(&m) {
        Some((ld, _)) if k > 0 => ((ld / k as f64).exp(), false),
        Some(_) => (1.0, false),
        None => (0.0, true),
    };
    Ok(DesignDiagnostics {
        level_balance,
        block_balance,
        max_abs_column_correlation: max_corr.min(1.0),
        d_efficiency,
        singular,
    })
}

fn balanced_column(n_runs: usize, n_levels: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut col: Vec<usize> = (0..n_runs).map(|r| r % n_levels).collect();
    col.shuffle(rng);
    col
}

/// Finite field GF(p^m); elements are integers whose base-p digits are
/// polynomial coefficients.
struct Field {
    q: usize,
    add: Vec<usize>,
    mul: Vec<usize>,
}

impl Field {
    fn new(p: usize, m: usize) -> Option<Self> {
        let q = p.pow(m as u32);
        let digits = |mut v: usize| -> Vec<usize> {
            (0..m)
                .map(|_| {
                    let d = v % p;
                    v /= p;
                    d
                })
                .collect()
        };
        let undigits = |d: &[usize]| d.iter().rev().fold(0, |acc, &x| acc * p + x);
        let mut add = vec![0; q * q];
        for a in 0..q {
            for b in 0..q {
                let (da, db) = (digits(a), digits(b));
                let s: Vec<usize> = da.iter().zip(&db).map(|(x, y)| (x + y) % p).collect();
                add[a * q + b] = undigits(&s);
            }
        }
        // search a monic modulus of degree m without zero divisors
        for tail in 0..q {
            let modulus = digits(tail);
            let mut mul = vec![0; q * q];
            for a in 0..q {
                for b in 0..q {
                    let (da, db) = (digits(a), digits(b));
                    let mut prod = vec![0usize; 2 * m];
                    for (i, x) in da.iter().enumerate() {
                        for (j, y) in db.iter().enumerate() {
                            prod[i + j] = (prod[i + j] + x * y) % p;
                        }
                    }
                    for deg in (m..2 * m).rev() {
                        let c = prod[deg];
                        if c == 0 {
                            continue;
                        }
                        prod[deg] = 0;
                        for (i, t) in modulus.iter().enumerate() {
                            let idx = deg - m + i;
                            prod[idx] = (prod[idx] + (p - t) * c) % p;
                        }
                    }
                    mul[a * q + b] = undigits(&prod[..m]);
                }
            }
            let is_field = (1..q).all(|a| (1..q).all(|b| mul[a * q + b] != 0));
            if is_field {
                return Some(Self { q, add, mul });
            }
        }
        None
    }
}

fn prime_power(n: usize) -> Option<(usize, usize)> {
    if n < 2 {
        return None;
    }
    let p = (2..=n).find(|d| n % d == 0)?;
    let mut e = 0;
    let mut v = n;
    while v % p == 0 {
        v /= p;
        e += 1;
    }
    (v == 1).then_some((p, e))
}

/// Strength-2 orthogonal array from the linear forms over GF(q)^t, each
/// factor taking the low base-p digits of a distinct projective column.
fn orthogonal_array_start(
    factors: &[FactorInfo],
    n_runs: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<Vec<usize>>> {
    let (p, total) = prime_power(n_runs)?;
    let mut need = 1;
    for f in factors {
        let (fp, e) = prime_power(f.n_levels())?;
        if fp != p {
            return None;
        }
        need = need.max(e);
    }
    let (m, t) = (need..=total).filter(|m| total % m == 0 && total / m >= 2).map(|m| (m, total / m)).find(
        |&(m, t)| {
            let q = p.pow(m as u32);
            (q.pow(t as u32) - 1) / (q - 1) >= factors.len()
        },
    )?;
    let field = Field::new(p, m)?;
    let q = field.q;
    let vector = |mut v: usize| -> Vec<usize> {
        (0..t)
            .map(|_| {
                let d = v % q;
                v /= q;
                d
            })
            .collect()
    };
    let columns: Vec<Vec<usize>> = (1..q.pow(t as u32))
        .map(vector)
        .filter(|a| a.iter().rev().find(|&&c| c != 0) == Some(&1))
        .collect();
    let mut chosen: Vec<usize> = (0..columns.len()).collect();
    chosen.shuffle(rng);
    let mut out = vec![vec![0; factors.len()]; n_runs];
    for (fi, f) in factors.iter().enumerate() {
        let a = &columns[chosen[fi]];
        let mut perm: Vec<usize> = (0..f.n_levels()).collect();
        perm.shuffle(rng);
        for (r, row) in out.iter_mut().enumerate() {
            let x = vector(r);
            let value = a.iter().zip(&x).fold(0, |acc, (&ai, &xi)| field.add[acc * q + field.mul[ai * q + xi]]);
            row[fi] = perm[value % f.n_levels()];
        }
    }
    out.shuffle(rng);
    Some(out)
}

struct SwapSearch<'a> {
    factors: &'a [FactorInfo],
    offsets: Vec<usize>,
    k: usize,
    levels: Vec<Vec<usize>>,
    x: Vec<f64>,
    inverse: DMatrix<f64>,
    log_det: f64,
}

impl<'a> SwapSearch<'a> {
    fn new(factors: &'a [FactorInfo], levels: Vec<Vec<usize>>) -> Option<Self> {
        let k = coded_width(factors);
        let offsets = factors
            .iter()
            .scan(0, |acc, f| {
                let o = *acc;
                *acc += f.n_columns();
                Some(o)
            })
            .collect();
        let runs: Vec<Profile> = levels.iter().map(|l| Profile { levels: l.clone() }).collect();
        let x = coded_matrix(factors, &runs);
        let a = cross_product(&x, levels.len(), k);
        let (log_det, inverse) = log_det(&a)?;
        Some(Self { factors, offsets, k, levels, x, inverse, log_det })
    }

    /// Determinant ratio of swapping factor `f` between runs `i` and `j`:
    /// the update is `w d' + d w'`, so the ratio is `(1 + w'Bd)^2 - (w'Bw)(d'Bd)`.
    fn ratio(&self, f: usize, i: usize, j: usize) -> f64 {
        let k = self.k;
        let (off, width) = (self.offsets[f], self.factors[f].n_columns());
        let ci = self.factors[f].code(self.levels[i][f]);
        let cj = self.factors[f].code(self.levels[j][f]);
        let d: Vec<f64> = cj.iter().zip(ci).map(|(a, b)| a - b).collect();
        let mut w: Vec<f64> = (0..k).map(|c| self.x[i * k + c] - self.x[j * k + c]).collect();
        w[off..off + width].iter_mut().for_each(|v| *v = 0.0);
        let b = &self.inverse;
        let mut bd = vec![0.0; k];
        for (c, dc) in d.iter().enumerate() {
            if *dc != 0.0 {
                for (r, v) in bd.iter_mut().enumerate() {
                    *v += b[(r, off + c)] * dc;
                }
            }
        }
        let wbd: f64 = w.iter().zip(&bd).map(|(a, b)| a * b).sum();
        let dbd: f64 = d.iter().enumerate().map(|(c, dc)| dc * bd[off + c]).sum();
        let mut wbw = 0.0;
        for r in 0..k {
            if w[r] == 0.0 {
                continue;
            }
            let mut s = 0.0;
            for c in 0..k {
                s += b[(r, c)] * w[c];
            }
            wbw += w[r] * s;
        }
        (1.0 + wbd).powi(2) - wbw * dbd
    }

    fn apply(&mut self, f: usize, i: usize, j: usize) -> bool {
        let mut levels = self.levels.clone();
        let tmp = levels[i][f];
        levels[i][f] = levels[j][f];
        levels[j][f] = tmp;
        match SwapSearch::new(self.factors, levels) {
            Some(next) if next.log_det > self.log_det => {
                *self = next;
                true
            }
            _ => false,
        }
    }

    /// One proposal: best swap partner of a random (factor, run); ties go to
    /// the lower run index.
    fn step(&mut self, rng: &mut ChaCha8Rng) -> bool {
        let n = self.levels.len();
        let f = rng.random_range(0..self.factors.len());
        let i = rng.random_range(0..n);
        let mut best: Option<(f64, usize)> = None;
        for j in 0..n {
            if self.levels[j][f] == self.levels[i][f] {
                continue;
            }
            let r = self.ratio(f, i, j);
            if r > 1.0 + 1e-10 && best.is_none_or(|(b, _)| r > b) {
                best = Some((r, j));
            }
        }
        match best {
            Some((_, j)) => self.apply(f, i, j),
            None => false,
        }
    }
}

struct Candidate {
    levels: Vec<Vec<usize>>,
    log_det: f64,
    max_corr: f64,
}

/// Selects `n_runs` balanced joint profiles maximizing D-efficiency by
/// seeded restarts and swap hill climbing. The result holds one block.
pub fn select_fraction(schema: &ExperimentSchema, opts: &FractionOptions) -> Result<BlockedDesign, DesignError> {
    let factors = factor_infos(schema);
    select_fraction_for(factors, opts)
}

pub(crate) fn select_fraction_for(
    factors: Vec<FactorInfo>,
    opts: &FractionOptions,
) -> Result<BlockedDesign, DesignError> {
    let k = coded_width(&factors);
    let minimum = k + 1;
    if opts.n_runs < minimum {
        return Err(DesignError::Infeasible { n_runs: opts.n_runs, columns: k, minimum });
    }
    let mut warnings = Vec::new();
    for f in &factors {
        if opts.n_runs % f.n_levels() != 0 {
            warnings.push(format!(
                "{} runs are not divisible by the {} levels of `{}`; balance is approximate",
                opts.n_runs,
                f.n_levels(),
                f.name
            ));
        }
    }
    let restarts = opts.restarts.max(1);
    let probe = orthogonal_array_start(&factors, opts.n_runs, &mut ChaCha8Rng::seed_from_u64(0)).is_some();
    if opts.start == StartKind::OrthogonalArray && !probe {
        return Err(DesignError::NoOrthogonalArray { n_runs: opts.n_runs });
    }
    let use_oa = probe && opts.start != StartKind::Random;

    let candidates: Vec<Option<Candidate>> = (0..restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(restart as u64);
            let start = if use_oa {
                orthogonal_array_start(&factors, opts.n_runs, &mut rng)?
            } else {
                let cols: Vec<Vec<usize>> =
                    factors.iter().map(|f| balanced_column(opts.n_runs, f.n_levels(), &mut rng)).collect();
                (0..opts.n_runs).map(|r| cols.iter().map(|c| c[r]).collect()).collect()
            };
            let mut search = match SwapSearch::new(&factors, start.clone()) {
                Some(s) => s,
                None => {
                    // singular start: random swaps until X'X is invertible
                    let mut levels = start;
                    let mut found = None;
                    for _ in 0..10 * opts.n_runs {
                        let f = rng.random_range(0..factors.len());
                        let i = rng.random_range(0..opts.n_runs);
                        let j = rng.random_range(0..opts.n_runs);
                        let t = levels[i][f];
                        levels[i][f] = levels[j][f];
                        levels[j][f] = t;
                        if let Some(s) = SwapSearch::new(&factors, levels.clone()) {
                            found = Some(s);
                            break;
                        }
                    }
                    found?
                }
            };
            for _ in 0..opts.iters {
                search.step(&mut rng);
            }
            let runs: Vec<Profile> = search.levels.iter().map(|l| Profile { levels: l.clone() }).collect();
            let design = BlockedDesign::from_runs(factors.clone(), runs, opts.seed).ok()?;
            Some(Candidate {
                levels: search.levels,
                log_det: search.log_det,
                max_corr: design.diagnostics.max_abs_column_correlation,
            })
        })
        .collect();

    let mut best: Option<Candidate> = None;
    for cand in candidates.into_iter().flatten() {
        let better = match &best {
            None => true,
            Some(b) => {
                cand.log_det > b.log_det + 1e-9
                    || ((cand.log_det - b.log_det).abs() <= 1e-9 && cand.max_corr < b.max_corr - 1e-12)
            }
        };
        if better {
            best = Some(cand);
        }
    }
    let best = best.ok_or(DesignError::Infeasible { n_runs: opts.n_runs, columns: k, minimum })?;
    let runs = best.levels.into_iter().map(|levels| Profile { levels }).collect();
    let mut design = BlockedDesign::from_runs(factors, runs, opts.seed)?;
    design.warnings = warnings;
    Ok(design)
}

struct BlockState<'a> {
    design: &'a BlockedDesign,
    size: usize,
    block_of: Vec<usize>,
    /// counts[block][factor][level]
    counts: Vec<Vec<Vec<usize>>>,
    targets: Vec<Vec<f64>>,
}

impl<'a> BlockState<'a> {
    fn new(design: &'a BlockedDesign, n_blocks: usize) -> Self {
        let n = design.n_runs();
        let size = n / n_blocks;
        let targets = design
            .factors
            .iter()
            .enumerate()
            .map(|(fi, f)| {
                let mut c = vec![0.0; f.n_levels()];
                design.runs.iter().for_each(|r| c[r.levels[fi]] += 1.0);
                c.iter().map(|v| v * size as f64 / n as f64).collect()
            })
            .collect();
        let counts = vec![design.factors.iter().map(|f| vec![0; f.n_levels()]).collect(); n_blocks];
        Self { design, size, block_of: vec![usize::MAX; n], counts, targets }
    }

    fn cell(&self, b: usize, f: usize, l: usize, delta: isize) -> f64 {
        (self.counts[b][f][l] as isize + delta) as f64 - self.targets[f][l]
    }

    /// Squared deviation plus a steep penalty beyond one run.
    fn penalty(d: f64) -> f64 {
        let excess = (d.abs() - 1.0).max(0.0);
        d * d + 100.0 * excess * excess
    }

    fn add_cost(&self, run: usize, b: usize) -> f64 {
        self.design.runs[run]
            .levels
            .iter()
            .enumerate()
            .map(|(f, &l)| Self::penalty(self.cell(b, f, l, 1)) - Self::penalty(self.cell(b, f, l, 0)))
            .sum()
    }

    fn place(&mut self, run: usize, b: usize) {
        self.block_of[run] = b;
        for (f, &l) in self.design.runs[run].levels.iter().enumerate() {
            self.counts[b][f][l] += 1;
        }
    }

    fn remove(&mut self, run: usize) {
        let b = self.block_of[run];
        for (f, &l) in self.design.runs[run].levels.iter().enumerate() {
            self.counts[b][f][l] -= 1;
        }
    }

    fn objective(&self) -> f64 {
        let mut total = 0.0;
        for b in 0..self.counts.len() {
            for (f, levels) in self.counts[b].iter().enumerate() {
                for l in 0..levels.len() {
                    total += Self::penalty(self.cell(b, f, l, 0));
                }
            }
        }
        total
    }

    fn swap_delta(&mut self, a: usize, c: usize) -> f64 {
        let before = self.objective();
        self.swap(a, c);
        let after = self.objective();
        self.swap(a, c);
        after - before
    }

    fn swap(&mut self, a: usize, c: usize) {
        let (ba, bc) = (self.block_of[a], self.block_of[c]);
        self.remove(a);
        self.remove(c);
        self.place(a, bc);
        self.place(c, ba);
    }
}

/// Partitions runs into `n_blocks` equal blocks with balanced level counts:
/// seeded greedy assignment followed by improving pairwise swaps.
pub fn block_design(design: &BlockedDesign, n_blocks: usize, seed: u64) -> Result<BlockedDesign, DesignError> {
    let n = design.n_runs();
    if n == 0 {
        return Err(DesignError::Empty);
    }
    if n_blocks == 0 || n % n_blocks != 0 {
        return Err(DesignError::BlocksDoNotDivide { runs: n, blocks: n_blocks });
    }
    const RESTARTS: u64 = 8;
    let results: Vec<(f64, Vec<usize>)> = (0..RESTARTS)
        .into_par_iter()
        .map(|restart| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1_000 + restart);
            let mut state = BlockState::new(design, n_blocks);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut filled = vec![0usize; n_blocks];
            for &run in &order {
                let mut best = (f64::INFINITY, 0);
                for b in 0..n_blocks {
                    if filled[b] < state.size {
                        let cost = state.add_cost(run, b);
                        if cost < best.0 - 1e-12 {
                            best = (cost, b);
                        }
                    }
                }
                state.place(run, best.1);
                filled[best.1] += 1;
            }
            for _ in 0..100 {
                let mut improved = false;
                for a in 0..n {
                    for c in (a + 1)..n {
                        if state.block_of[a] != state.block_of[c] && state.swap_delta(a, c) < -1e-9 {
                            state.swap(a, c);
                            improved = true;
                        }
                    }
                }
                if !improved {
                    break;
                }
            }
            (state.objective(), state.block_of)
        })
        .collect();
    let (_, block_of) = results
        .into_iter()
        .reduce(|best, next| if next.0 < best.0 - 1e-9 { next } else { best })
        .expect("at least one restart");

    let mut blocks = vec![Vec::new(); n_blocks];
    for (run, &b) in block_of.iter().enumerate() {
        blocks[b].push(run);
    }
    blocks.sort_by_key(|b| b[0]);
    let mut out = design.clone();
    out.blocks = blocks;
    out.seed = seed;
    out.diagnostics = design_diagnostics(&out)?;
    Ok(out)
}

/// Level frequencies per factor, keyed by factor name.
pub fn level_counts(design: &BlockedDesign) -> BTreeMap<String, Vec<usize>> {
    design
        .factors
        .iter()
        .enumerate()
        .map(|(fi, f)| {
            let mut c = vec![0; f.n_levels()];
            design.runs.iter().for_each(|r| c[r.levels[fi]] += 1);
            (f.name.clone(), c)
        })
        .collect()
}
