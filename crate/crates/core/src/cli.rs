//! Command-line front end.
//!
//! Exit codes: 0 success, 1 failed self-check, 2 invalid input or
//! estimation error, 3 non-convergence under `--strict`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::{build_basis, load_csv, BasisExpansion, CsvSchema};
use crate::error::{Error, Result};
use crate::estimators::{Estimate, Target};
use crate::losses::Link;
use crate::pipeline::{FitSummary, Method, NuisanceCache, PipelineConfig, Slot};
use crate::selfcheck::{self, CheckOptions, CheckReport};
use crate::simulation::{run_monte_carlo, Config, MonteCarloOptions, MonteCarloReport, ScenarioSpec};
use crate::solver::SolverOptions;
use crate::tuning::{GridSpec, LambdaChoice};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NONCONVERGED: i32 = 3;

/// Seed used when `--seed` is absent.
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "calibdr", version, about = "Regularized calibrated estimation of treatment effects")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the nuisance models of a method and report coefficients.
    Fit(DataArgs),
    /// Fit nuisance models and report point estimates with Wald intervals.
    Estimate(EstimateArgs),
    /// Run a Monte-Carlo study on a simulated configuration.
    Simulate(SimulateArgs),
    /// Run the self-verification battery.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "y")]
    pub y_col: String,
    #[arg(long, default_value = "t")]
    pub t_col: String,
    /// Comma-separated covariate names or a glob such as `x*`.
    #[arg(long, default_value = "x*")]
    pub x_cols: String,
    /// rcal-rwl, rml-rml, ipw-rcal, ipw-rml or or-rml.
    #[arg(long, default_value = "rcal-rwl")]
    pub method: String,
    /// mu1, mu0, ate or att.
    #[arg(long, default_value = "mu1")]
    pub target: String,
    #[arg(long, value_enum, default_value = "identity")]
    pub link: LinkArg,
    /// `auto` for cross-validation or a fixed penalty.
    #[arg(long, default_value = "auto")]
    pub lambda: String,
    #[arg(long, default_value_t = 5)]
    pub cv_folds: usize,
    /// `pow2:<n>` or `pow2q:<n>`.
    #[arg(long, default_value = "pow2q:25")]
    pub grid: String,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Add pairwise interactions of the covariates.
    #[arg(long)]
    pub interactions: bool,
    /// Minimum nonzero count for interaction columns (default 0.8% of n).
    #[arg(long)]
    pub min_nonzero: Option<usize>,
    /// Fit on the raw covariate scale.
    #[arg(long)]
    pub no_standardize: bool,
    /// Exit with code 3 if any fit fails to converge.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Include per-row influence values in the report.
    #[arg(long)]
    pub dump_influence: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// C1 to C6.
    #[arg(long, default_value = "C1")]
    pub scenario: String,
    #[arg(long, default_value_t = 1)]
    pub outcome_config: u8,
    #[arg(long = "n", default_value_t = 400)]
    pub n: usize,
    #[arg(long = "p", default_value_t = 100)]
    pub p: usize,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value = "rml.rml,rcal.rwl")]
    pub methods: String,
    #[arg(long, default_value = "pow2:11")]
    pub grid: String,
    #[arg(long, default_value_t = 5)]
    pub cv_folds: usize,
    #[arg(long, env = "CALIBDR_THREADS", default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the t-statistics as CSV (`method,rep,t`).
    #[arg(long)]
    pub t_stats_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Skip the checks that need 10⁶ random draws.
    #[arg(long)]
    pub quick: bool,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum LinkArg {
    Identity,
    Logistic,
}

impl From<LinkArg> for Link {
    fn from(l: LinkArg) -> Self {
        match l {
            LinkArg::Identity => Link::Identity,
            LinkArg::Logistic => Link::Logistic,
        }
    }
}

/// An estimate as written to report documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateRecord {
    pub target: Target,
    pub method: String,
    pub point: f64,
    pub se: f64,
    pub ci: [f64; 2],
    pub level: f64,
    pub v_hat: f64,
    pub n: usize,
}

impl From<&Estimate> for EstimateRecord {
    fn from(e: &Estimate) -> Self {
        Self {
            target: e.target,
            method: e.method.clone(),
            point: e.point,
            se: e.se,
            ci: [e.ci_low, e.ci_high],
            level: e.level,
            v_hat: e.v_hat,
            n: e.n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceRecord {
    pub slot: Slot,
    /// `None` when the weights overflow, as they can for a diverged fit.
    pub balance_max: Option<f64>,
    pub balance_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfluenceRecord {
    pub target: Target,
    pub values: Vec<f64>,
}

/// Output of `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDocument {
    pub method: Method,
    pub target: Target,
    pub link: Link,
    pub n: usize,
    pub p: usize,
    pub converged: bool,
    pub fits: Vec<FitSummary>,
    pub balance: Vec<BalanceRecord>,
    pub warnings: Vec<String>,
}

/// Output of `estimate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateDocument {
    pub method: Method,
    pub target: Target,
    pub link: Link,
    pub n: usize,
    pub p: usize,
    pub converged: bool,
    pub fits: Vec<FitSummary>,
    pub balance: Vec<BalanceRecord>,
    pub estimates: Vec<EstimateRecord>,
    /// `pass`/`fail` for RCAL.RWL arm estimates, `n/a` otherwise.
    pub boundedness: String,
    pub warnings: Vec<String>,
    pub influence: Option<Vec<InfluenceRecord>>,
}

fn parse_lambda(args: &DataArgs) -> Result<LambdaChoice> {
    if args.lambda.trim().eq_ignore_ascii_case("auto") {
        let grid: GridSpec = args.grid.parse()?;
        return Ok(LambdaChoice::Auto { grid, folds: args.cv_folds, seed: args.seed });
    }
    let value: f64 =
        args.lambda.trim().parse().map_err(|_| {
            Error::InvalidArgument(format!("--lambda must be `auto` or a number, got `{}`", args.lambda))
        })?;
    if !(value >= 0.0) || !value.is_finite() {
        return Err(Error::InvalidArgument(format!("--lambda must be finite and >= 0, got {value}")));
    }
    Ok(LambdaChoice::Fixed(value))
}

struct Prepared {
    method: Method,
    target: Target,
    link: Link,
    data: crate::dataset::ObservedData,
    basis: crate::dataset::RegressorBasis,
    config: PipelineConfig,
}

fn prepare(args: &DataArgs, level: f64) -> Result<Prepared> {
    let method: Method = args.method.parse()?;
    let target: Target = args.target.parse()?;
    let link: Link = args.link.into();
    let lambda = parse_lambda(args)?;
    let schema = CsvSchema::new(&args.y_col, &args.t_col, &args.x_cols);
    let data = load_csv(&args.data, &schema)?;
    let expansion = if args.interactions {
        BasisExpansion::Pairwise { min_nonzero: args.min_nonzero }
    } else {
        BasisExpansion::Raw
    };
    let basis = build_basis(&data, !args.no_standardize, expansion)?;
    let config = PipelineConfig { link, lambda, level, solver: SolverOptions::default() };
    Ok(Prepared { method, target, link, data, basis, config })
}

fn balance_records(cache: &NuisanceCache<'_>, fits: &[FitSummary]) -> Result<Vec<BalanceRecord>> {
    let mut out = Vec::new();
    for f in fits {
        if let Some(b) = cache.balance(f.slot)? {
            let finite = |v: f64| v.is_finite().then_some(v);
            out.push(BalanceRecord { slot: f.slot, balance_max: finite(b.max), balance_mean: finite(b.mean) });
        }
    }
    Ok(out)
}

fn nonconvergence_warnings(fits: &[FitSummary]) -> Vec<String> {
    fits.iter()
        .filter(|f| !f.converged)
        .map(|f| format!("{} did not converge at lambda {}", f.loss, f.lambda_selected))
        .collect()
}

fn fit_slots(method: Method, target: Target) -> Vec<Slot> {
    use crate::losses::Arm::{Treated, Untreated};
    let arms = match target {
        Target::Mu1 => vec![Treated],
        Target::Mu0 | Target::Att | Target::Nu0 | Target::Nu1 => vec![Untreated],
        Target::Ate => vec![Treated, Untreated],
    };
    let mut slots = Vec::new();
    for arm in arms {
        let per_arm = match method {
            Method::RmlRml => vec![Slot::PsMl, Slot::OrMl(arm)],
            Method::RcalRwl => vec![Slot::PsCal(arm), Slot::OrWl(arm)],
            Method::IpwRml => vec![Slot::PsMl],
            Method::IpwRcal => vec![Slot::PsCal(arm)],
            Method::OrRml => vec![Slot::OrMl(arm)],
        };
        for s in per_arm {
            if !slots.contains(&s) {
                slots.push(s);
            }
        }
    }
    slots
}

pub fn cmd_fit(args: &DataArgs) -> Result<(FitDocument, i32)> {
    let prep = prepare(args, 0.95)?;
    let mut cache = NuisanceCache::new(&prep.basis, &prep.data, prep.config)?;
    for slot in fit_slots(prep.method, prep.target) {
        cache.fit(slot)?;
    }
    let fits = cache.fit_summaries()?;
    let converged = fits.iter().all(|f| f.converged);
    let doc = FitDocument {
        method: prep.method,
        target: prep.target,
        link: prep.link,
        n: prep.data.n(),
        p: prep.basis.p(),
        converged,
        balance: balance_records(&cache, &fits)?,
        warnings: nonconvergence_warnings(&fits),
        fits,
    };
    let code = if args.strict && !converged { EXIT_NONCONVERGED } else { EXIT_OK };
    Ok((doc, code))
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<(EstimateDocument, i32)> {
    let prep = prepare(&args.data, args.level)?;
    let mut cache = NuisanceCache::new(&prep.basis, &prep.data, prep.config)?;
    let result = cache.estimate(prep.method, prep.target)?;

    let mut bounded: Option<bool> = None;
    if prep.method == Method::RcalRwl {
        for e in &result.estimates {
            let arm = match e.target {
                Target::Mu1 => crate::losses::Arm::Treated,
                Target::Mu0 => crate::losses::Arm::Untreated,
                _ => continue,
            };
            let (lo, hi) = cache.nuisances(prep.method, arm)?.prediction_range(&prep.data)?;
            let inside = lo <= e.point && e.point <= hi;
            bounded = Some(bounded.unwrap_or(true) && inside);
        }
    }
    let boundedness = match bounded {
        Some(true) => "pass",
        Some(false) => "fail",
        None => "n/a",
    }
    .to_string();

    let fits = cache.fit_summaries()?;
    let influence = args.dump_influence.then(|| {
        result.estimates.iter().map(|e| InfluenceRecord { target: e.target, values: e.influence.clone() }).collect()
    });
    let doc = EstimateDocument {
        method: prep.method,
        target: prep.target,
        link: prep.link,
        n: prep.data.n(),
        p: prep.basis.p(),
        converged: result.converged,
        balance: balance_records(&cache, &fits)?,
        warnings: nonconvergence_warnings(&fits),
        fits,
        estimates: result.estimates.iter().map(EstimateRecord::from).collect(),
        boundedness,
        influence,
    };
    let code = if args.data.strict && !result.converged { EXIT_NONCONVERGED } else { EXIT_OK };
    Ok((doc, code))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<MonteCarloReport> {
    let config: Config = args.scenario.parse()?;
    let methods = Method::parse_list(&args.methods)?;
    let spec = ScenarioSpec::new(config, args.outcome_config, args.n, args.p, args.seed).with_methods(methods);
    spec.validate()?;
    let grid: GridSpec = args.grid.parse()?;
    if args.workers == 0 {
        return Err(Error::InvalidArgument("--workers must be at least 1".into()));
    }
    let opts = MonteCarloOptions {
        reps: args.reps,
        grid,
        folds: args.cv_folds,
        solver: SolverOptions::default(),
        workers: args.workers,
    };
    run_monte_carlo(&spec, &opts)
}

pub fn cmd_check(args: &CheckArgs) -> CheckReport {
    selfcheck::run_checks(CheckOptions { quick: args.quick, seed: args.seed })
}

/// Exit code for a self-check report.
pub fn check_exit_code(report: &CheckReport) -> i32 {
    if report.pass {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => fs::write(path, text + "\n").map_err(|source| Error::Io { path: path.to_path_buf(), source }),
        None => writeln!(stdout, "{text}").map_err(|source| Error::Io { path: PathBuf::from("<stdout>"), source }),
    }
}

/// Writes `method,rep,t` rows for every t-statistic in a report.
pub fn write_t_stats_csv(report: &MonteCarloReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "rep", "t"])?;
    for m in &report.methods {
        for (i, t) in m.t_stats.iter().enumerate() {
            w.write_record([m.method.tag().to_string(), i.to_string(), format!("{t}")])?;
        }
    }
    w.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Fit(args) => {
            let (doc, code) = cmd_fit(&args)?;
            write_json(&doc, args.out.as_deref(), stdout)?;
            for w in &doc.warnings {
                let _ = writeln!(stderr, "warning: {w}");
            }
            Ok(code)
        }
        Command::Estimate(args) => {
            let (doc, code) = cmd_estimate(&args)?;
            write_json(&doc, args.data.out.as_deref(), stdout)?;
            for w in &doc.warnings {
                let _ = writeln!(stderr, "warning: {w}");
            }
            Ok(code)
        }
        Command::Simulate(args) => {
            let report = cmd_simulate(&args)?;
            write_json(&report, args.out.as_deref(), stdout)?;
            if let Some(path) = &args.t_stats_csv {
                write_t_stats_csv(&report, path)?;
            }
            Ok(EXIT_OK)
        }
        Command::Check(args) => {
            let report = cmd_check(&args);
            for c in &report.checks {
                let _ = writeln!(stderr, "{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if let Some(path) = &args.out {
                write_json(&report, Some(path), stdout)?;
            }
            Ok(check_exit_code(&report))
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run_with_io<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(cli, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_INPUT
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_with_io(args, &mut std::io::stdout(), &mut std::io::stderr())
}
