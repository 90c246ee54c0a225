//! Command-line front end: `design`, `simulate`, `estimate` and `postest`.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 non-convergence
//! (the result is still written). Every written file gets a sidecar
//! `<file>.manifest.json` recording the command, seeds and SHA-256 digests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dataset::{code_dataset, ingest_choices, screen_responses, write_choices, ScreeningRules};
use crate::design::{block_design, select_fraction, BlockedDesign, FractionOptions, StartKind};
use crate::error::Error;
use crate::fixtures;
use crate::mmnl::{estimate_mmnl, MixingSpec};
use crate::mnl::{estimate_mnl, EstimationError, EstimationOptions, EstimationResult};
use crate::numerics::HaltonConfig;
use crate::postest::{
    cost_slope, default_wtp_requests, estimation_table, fit_stats, grid_csv, lr_test, own_cost_elasticity,
    price_probability_grid, wtp_report, wtp_table,
};
use crate::schema::{build_parameter_index, ExperimentSchema};
use crate::simulate::{align_params, simulate_dataset, BlockAssignment, SimConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const THREADS_ENV: &str = "DCE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "dce", version, about = "Discrete choice experiment toolkit")]
pub struct Cli {
    /// Worker threads for estimation and simulation; defaults to logical cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a blocked fractional-factorial design.
    Design(DesignArgs),
    /// Simulate respondents answering a design.
    Simulate(SimulateArgs),
    /// Estimate a choice model from long-format choices.
    Estimate(EstimateArgs),
    /// Willingness to pay, fit, likelihood-ratio and elasticity reports.
    Postest(PostestArgs),
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    /// Schema JSON; the bundled delivery schema when absent.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub runs: usize,
    #[arg(long, default_value_t = 8)]
    pub blocks: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Swap proposals per restart.
    #[arg(long, default_value_t = 2_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, value_enum, default_value_t = StartArg::Auto)]
    pub start: StartArg,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum StartArg {
    Auto,
    Random,
    Oa,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Result JSON holding the true parameters; SD entries switch on mixing.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long, default_value_t = 528)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = AssignmentArg::Balanced)]
    pub assignment: AssignmentArg,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AssignmentArg {
    Balanced,
    Uniform,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
pub enum ModelArg {
    Mnl,
    Mmnl,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(value_enum)]
    pub model: ModelArg,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub draws: usize,
    /// Comma-separated random parameters.
    #[arg(long, value_delimiter = ',', default_value = "asc_drone,asc_truck")]
    pub random: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "2,3")]
    pub primes: Vec<u64>,
    #[arg(long, default_value_t = 10)]
    pub drop: u64,
    #[arg(long)]
    pub antithetic: bool,
    /// Seed for random-digit scrambling of the Halton sequence.
    #[arg(long)]
    pub scramble: Option<u64>,
    #[arg(long, default_value_t = 1_000)]
    pub max_iter: usize,
    /// Also drop respondents who always pick the same alternative.
    #[arg(long)]
    pub straight_line: bool,
    /// Drop respondents faster than this many seconds.
    #[arg(long)]
    pub min_seconds: Option<f64>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
pub enum ReportArg {
    Wtp,
    Fit,
    Lr,
    Elasticity,
    Table,
}

#[derive(Debug, Args)]
pub struct PostestArgs {
    #[arg(value_enum)]
    pub report: ReportArg,
    #[arg(long)]
    pub result: Option<PathBuf>,
    /// Bundled coefficient set: `table4` (mixed logit) or `table4_mnl`.
    #[arg(long)]
    pub fixture: Option<String>,
    /// Restricted model for `lr`; `--result` is the full model.
    #[arg(long)]
    pub restricted: Option<PathBuf>,
    #[arg(long)]
    pub df: Option<usize>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Alternative whose cost slope converts utility to yen.
    #[arg(long)]
    pub slope_mode: Option<String>,
    #[arg(long)]
    pub price: Option<f64>,
    #[arg(long)]
    pub prob: Option<f64>,
    /// Write a price/probability CSV for the slope mode.
    #[arg(long)]
    pub emit_grid: Option<PathBuf>,
    /// Emit JSON instead of a text table.
    #[arg(long)]
    pub json: bool,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Outcome of a command: exit code plus text for standard output.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub tool_version: String,
    pub seeds: BTreeMap<String, u64>,
    pub config_paths: Vec<String>,
    /// SHA-256 of every input file.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub elapsed_seconds: f64,
}

struct Recorder {
    manifest: RunManifest,
    started: Instant,
}

impl Recorder {
    fn new(command: &str, args: &[String]) -> Self {
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                args: args.to_vec(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                seeds: BTreeMap::new(),
                config_paths: Vec::new(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                elapsed_seconds: 0.0,
            },
            started: Instant::now(),
        }
    }

    fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.manifest.inputs.insert(path.display().to_string(), digest(bytes));
    }

    fn config(&mut self, path: &Path, bytes: &[u8]) {
        self.manifest.config_paths.push(path.display().to_string());
        self.input(path, bytes);
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<(), Error> {
        fs::write(path, bytes)?;
        self.manifest.outputs.insert(path.display().to_string(), digest(bytes));
        Ok(())
    }

    /// Writes the manifest next to `primary`.
    fn finish(&mut self, primary: &Path) -> Result<PathBuf, Error> {
        self.manifest.elapsed_seconds = self.started.elapsed().as_secs_f64();
        let path = manifest_path(primary);
        fs::write(&path, serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        Ok(path)
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read(path: &Path) -> Result<Vec<u8>, Error> {
    fs::read(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

fn load_schema(path: Option<&Path>, rec: &mut Recorder) -> Result<Arc<ExperimentSchema>, Error> {
    Ok(Arc::new(match path {
        Some(p) => {
            let bytes = read(p)?;
            rec.config(p, &bytes);
            ExperimentSchema::from_json(&String::from_utf8_lossy(&bytes))?
        }
        None => ExperimentSchema::drone_delivery_japan(),
    }))
}

fn load_result(path: &Path, rec: Option<&mut Recorder>) -> Result<EstimationResult, Error> {
    let bytes = read(path)?;
    if let Some(rec) = rec {
        rec.input(path, &bytes);
    }
    Ok(EstimationResult::from_json(&String::from_utf8_lossy(&bytes))?)
}

/// Exit code for an error: numerical failures map to 3, everything else to 2.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Estimation(
            EstimationError::Numerics(_) | EstimationError::Underflow(_) | EstimationError::NonFiniteUtility { .. },
        ) => EXIT_NOT_CONVERGED,
        _ => EXIT_INPUT,
    }
}

/// Thread count: `DCE_THREADS` wins over `--threads`.
pub fn resolve_threads(flag: Option<usize>) -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()).or(flag).filter(|&n| n > 0)
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let recorded: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match Cli::try_parse_from(&args) {
        Ok(cli) => run_with_args(cli, &recorded),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                Outcome { code, stdout: text, stderr: String::new() }
            } else {
                Outcome { code, stdout: String::new(), stderr: text }
            }
        }
    }
}

pub fn run(cli: Cli) -> Outcome {
    run_with_args(cli, &[])
}

/// Runs a parsed command; `args` are recorded in manifests.
pub fn run_with_args(cli: Cli, args: &[String]) -> Outcome {
    let result = match resolve_threads(cli.threads) {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command, args)),
            Err(e) => Err(Error::Io(std::io::Error::other(e.to_string()))),
        },
        None => dispatch(&cli.command, args),
    };
    result.unwrap_or_else(|e| Outcome { code: exit_code(&e), stdout: String::new(), stderr: format!("error: {e}\n") })
}

fn dispatch(command: &Command, args: &[String]) -> Result<Outcome, Error> {
    match command {
        Command::Design(a) => run_design(a, args),
        Command::Simulate(a) => run_simulate(a, args),
        Command::Estimate(a) => run_estimate(a, args),
        Command::Postest(a) => run_postest(a, args),
    }
}

fn ok(stdout: String) -> Outcome {
    Outcome { code: EXIT_OK, stdout, stderr: String::new() }
}

pub fn run_design(a: &DesignArgs, args: &[String]) -> Result<Outcome, Error> {
    let mut rec = Recorder::new("design", args);
    let schema = load_schema(a.schema.as_deref(), &mut rec)?;
    rec.manifest.seeds.insert("seed".into(), a.seed);
    if a.blocks == 0 || a.runs % a.blocks != 0 {
        return Err(crate::design::DesignError::BlocksDoNotDivide { runs: a.runs, blocks: a.blocks }.into());
    }
    let opts = FractionOptions {
        iters: a.iters,
        restarts: a.restarts,
        start: match a.start {
            StartArg::Auto => StartKind::Auto,
            StartArg::Random => StartKind::Random,
            StartArg::Oa => StartKind::OrthogonalArray,
        },
        ..FractionOptions::new(a.runs, a.seed)
    };
    let design = block_design(&select_fraction(&schema, &opts)?, a.blocks, a.seed)?;
    rec.write(&a.output, design.to_csv_string().as_bytes())?;
    let diag_path = sidecar(&a.output, "diagnostics.json");
    let diag = serde_json::json!({
        "runs": design.n_runs(),
        "blocks": design.n_blocks(),
        "seed": design.seed,
        "diagnostics": design.diagnostics,
        "warnings": design.warnings,
    });
    rec.write(&diag_path, (serde_json::to_string_pretty(&diag)? + "\n").as_bytes())?;
    rec.finish(&a.output)?;
    let d = &design.diagnostics;
    let mut out = String::new();
    let _ = writeln!(out, "wrote {} runs in {} blocks to {}", design.n_runs(), design.n_blocks(), a.output.display());
    let _ = writeln!(out, "d-efficiency {:.4}", d.d_efficiency);
    let _ = writeln!(out, "max |column correlation| {:.4}", d.max_abs_column_correlation);
    let _ = writeln!(out, "max level imbalance {}", d.max_level_imbalance());
    let _ = writeln!(out, "max block imbalance {}", d.block_balance);
    let mut stderr = String::new();
    for w in &design.warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
    Ok(Outcome { code: EXIT_OK, stdout: out, stderr })
}

fn sidecar(output: &Path, suffix: &str) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}.{suffix}"))
}

pub fn run_simulate(a: &SimulateArgs, args: &[String]) -> Result<Outcome, Error> {
    let mut rec = Recorder::new("simulate", args);
    let schema = load_schema(a.schema.as_deref(), &mut rec)?;
    let design_bytes = read(&a.design)?;
    rec.input(&a.design, &design_bytes);
    let design = BlockedDesign::read_csv(&schema, design_bytes.as_slice())?;
    let truth = load_result(&a.params, Some(&mut rec))?;
    let mixing = truth.mixing.as_ref().filter(|m| !m.random_params.is_empty()).map(|m| MixingSpec {
        random_params: m.random_params.clone(),
        halton: HaltonConfig::default(),
        antithetic: false,
    });
    let index = build_parameter_index(&schema, mixing.as_ref())?;
    let params = align_params(&truth, &index)?;
    let mut cfg = SimConfig::new(schema.clone(), design, params, a.n, a.seed);
    cfg.mixing = mixing;
    cfg.assignment = match a.assignment {
        AssignmentArg::Balanced => BlockAssignment::Balanced,
        AssignmentArg::Uniform => BlockAssignment::Uniform,
    };
    rec.manifest.seeds.insert("seed".into(), a.seed);
    let ds = simulate_dataset(&cfg)?;
    let mut buf = Vec::new();
    write_choices(&ds, &mut buf)?;
    rec.write(&a.output, &buf)?;
    rec.finish(&a.output)?;
    Ok(ok(format!(
        "wrote {} respondents, {} tasks, {} rows to {} ({:?} block assignment)\n",
        ds.respondents.len(),
        ds.n_tasks(),
        ds.n_rows(),
        a.output.display(),
        cfg.assignment
    )))
}

pub fn run_estimate(a: &EstimateArgs, args: &[String]) -> Result<Outcome, Error> {
    let mut rec = Recorder::new(match a.model {
        ModelArg::Mnl => "estimate mnl",
        ModelArg::Mmnl => "estimate mmnl",
    }, args);
    let schema = load_schema(a.schema.as_deref(), &mut rec)?;
    let data = read(&a.data)?;
    rec.input(&a.data, &data);
    let ds = ingest_choices(data.as_slice(), schema.clone())?;
    let rules = ScreeningRules { straight_line: a.straight_line, fast_completion: a.min_seconds, ..Default::default() };
    let (ds, screening) = screen_responses(&ds, &rules);
    let index = build_parameter_index(&schema, None)?;
    let panel = code_dataset(&ds, &index)?;
    let mut opts = EstimationOptions::default();
    opts.optimizer.max_iterations = a.max_iter;
    let mut result = match a.model {
        ModelArg::Mnl => estimate_mnl(&panel, &opts)?,
        ModelArg::Mmnl => {
            let mixing = MixingSpec {
                random_params: a.random.clone(),
                halton: HaltonConfig { primes: a.primes.clone(), drop: a.drop, n_draws: a.draws, scramble: a.scramble },
                antithetic: a.antithetic,
            };
            if let Some(s) = a.scramble {
                rec.manifest.seeds.insert("scramble".into(), s);
            }
            estimate_mmnl(&panel, &mixing, &opts)?
        }
    };
    result.source = Some(a.data.display().to_string());
    let mut doc = result.to_document();
    doc.manifest = manifest_path(&a.output).file_name().map(|n| n.to_string_lossy().into_owned());
    rec.write(&a.output, (serde_json::to_string_pretty(&doc)? + "\n").as_bytes())?;
    rec.finish(&a.output)?;
    let mut stderr = String::new();
    if !screening.removed.is_empty() {
        let _ = writeln!(stderr, "screening removed {} of {} respondents", screening.removed.len(), screening.respondents_before);
    }
    let code = if result.converged {
        EXIT_OK
    } else {
        let _ = writeln!(stderr, "error: optimizer did not converge ({:?}); result written", result.status);
        EXIT_NOT_CONVERGED
    };
    Ok(Outcome { code, stdout: estimation_table(&result, &schema), stderr })
}

fn postest_result(a: &PostestArgs) -> Result<EstimationResult, Error> {
    match (&a.result, &a.fixture) {
        (Some(p), _) => load_result(p, None),
        (None, Some(name)) => fixtures::by_name(name).ok_or_else(|| input_error(format!("unknown fixture `{name}`"))),
        (None, None) => Err(input_error("either --result or --fixture is required".into())),
    }
}

fn input_error(msg: String) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidInput, msg))
}

pub fn run_postest(a: &PostestArgs, args: &[String]) -> Result<Outcome, Error> {
    let mut rec = Recorder::new("postest", args);
    let schema = load_schema(a.schema.as_deref(), &mut rec)?;
    let text = match a.report {
        ReportArg::Wtp => {
            let result = postest_result(a)?;
            let mut requests = default_wtp_requests(&schema);
            if let Some(mode) = &a.slope_mode {
                requests = requests.into_iter().map(|r| r.with_slope_mode(mode)).collect();
            }
            let report = wtp_report(&result, &schema, &requests)?;
            if a.json {
                serde_json::to_string_pretty(&report)? + "\n"
            } else {
                wtp_table(&report)
            }
        }
        ReportArg::Fit => {
            let result = postest_result(a)?;
            let fit = fit_stats(result.ll_final, result.ll_null, result.k)?;
            if a.json {
                serde_json::to_string_pretty(&fit)? + "\n"
            } else {
                format!(
                    "LL(0) {:.3}\nLL(beta) {:.3}\nk {}\nrho2 {:.4}\nrho2 adjusted {:.4}\n",
                    result.ll_null, result.ll_final, result.k, fit.rho2, fit.rho2_adj
                )
            }
        }
        ReportArg::Lr => {
            let (restricted, full) = match (&a.restricted, &a.result, &a.fixture) {
                (Some(r), Some(f), _) => (load_result(r, None)?, load_result(f, None)?),
                (None, None, Some(name)) if name.starts_with("table4") => {
                    (fixtures::published_mnl(), fixtures::published_mmnl())
                }
                _ => return Err(input_error("lr needs --restricted and --result, or --fixture table4".into())),
            };
            let df = a.df.unwrap_or(full.k.saturating_sub(restricted.k));
            let lr = lr_test(restricted.ll_final, full.ll_final, df)?;
            if a.json {
                serde_json::to_string_pretty(&lr)? + "\n"
            } else {
                format!("LR statistic {:.2}\ndf {}\np-value {:e}\n", lr.statistic, lr.df, lr.p_value)
            }
        }
        ReportArg::Elasticity => {
            let result = match (&a.result, &a.fixture) {
                (None, None) => fixtures::published_mmnl(),
                _ => postest_result(a)?,
            };
            let mode = a.slope_mode.clone().unwrap_or_else(|| schema.alternatives[0].id.clone());
            let slope = cost_slope(&result, &schema, &mode)?;
            let price = a.price.ok_or_else(|| input_error("--price is required".into()))?;
            let prob = a.prob.ok_or_else(|| input_error("--prob is required".into()))?;
            let e = own_cost_elasticity(&slope, price, prob)?;
            if let Some(grid_path) = &a.emit_grid {
                let lo = slope.points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
                let hi = slope.points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
                let prices: Vec<f64> = (0..=20).map(|i| lo + (hi - lo) * i as f64 / 20.0).collect();
                let grid = price_probability_grid(&slope, schema.n_alternatives(), &prices);
                rec.write(grid_path, grid_csv(&grid).as_bytes())?;
                rec.finish(grid_path)?;
            }
            if a.json {
                serde_json::to_string_pretty(&e)? + "\n"
            } else {
                format!(
                    "mode {}\nprice {}\nprobability {}\nslope {:.7}\nelasticity {:.3} ({})\n",
                    e.mode, e.price, e.probability, e.slope, e.elasticity, e.label
                )
            }
        }
        ReportArg::Table => estimation_table(&postest_result(a)?, &schema),
    };
    if let Some(out) = &a.output {
        rec.write(out, text.as_bytes())?;
        rec.finish(out)?;
    }
    Ok(ok(text))
}
