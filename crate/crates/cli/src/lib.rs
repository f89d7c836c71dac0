//! Command-line front end for `modecert`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use modecert::io::{read_sample, to_json_string, write_json_file};
use modecert::montecarlo::{default_table_alphas, table_from_statistics};
use modecert::{
    confidence_intervals, coverage_study, fit, fit_constrained, laplace_projection, lr_test,
    simulate_null, CriticalValueTable, EngineOptions, Error, GridOptions, ReferenceDistribution,
    Sample, SolverOptions, TableMeta,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    /// 3 for non-convergence, 2 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::NotConverged { .. }) => 3,
            _ => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "modecert", version, about = "Log-concave MLE and likelihood-ratio inference for the mode")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Unconstrained log-concave MLE.
    Fit(FitArgs),
    /// Log-concave MLE whose modal interval contains --mode.
    FitConstrained(ModeArgs),
    /// Likelihood-ratio test of H0: mode = --mode.
    Lrtest(LrArgs),
    /// Confidence interval(s) for the mode by test inversion.
    Ci(CiArgs),
    /// Simulate the null law of the statistic; --out *.json writes a critical-value table, *.csv the raw statistics.
    SimulateNull(SimArgs),
    /// Coverage and mean length of the intervals over repeated samples.
    Coverage(CoverageArgs),
    /// Kullback-Leibler projection of Laplace(0,1) onto densities with mode --mode.
    LaplaceExample(LaplaceArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// File with one observation per line.
    #[arg(long, conflicts_with = "dist")]
    pub input: Option<PathBuf>,
    /// Synthetic data, e.g. `normal:0,1` or `gamma:3,1`.
    #[arg(long)]
    pub dist: Option<String>,
    /// Sample size for --dist.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = SolverOptions::default().tol)]
    pub tol: f64,
    #[arg(long = "max-iter", default_value_t = SolverOptions::default().max_iter)]
    pub max_iter: usize,
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Hypothesized mode.
    #[arg(long, allow_negative_numbers = true)]
    pub mode: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LrArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, allow_negative_numbers = true)]
    pub mode: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Critical-value table; defaults to the shipped one.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CiArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, conflicts_with = "levels")]
    pub alpha: Option<f64>,
    /// Comma-separated confidence levels, e.g. `0.8,0.9,0.95`.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    #[arg(long, default_value_t = GridOptions::default().points)]
    pub grid: usize,
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub dist: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub reps: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    #[arg(long)]
    pub dist: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub reps: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.8, 0.9, 0.95, 0.99])]
    pub levels: Vec<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = GridOptions::default().points)]
    pub grid: usize,
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LaplaceArgs {
    #[arg(long, default_value_t = 1.0)]
    pub mode: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs one subcommand. Returns what should go to stdout.
pub fn run(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Fit(a) => {
            let s = load(&a.data)?;
            emit(&fit(&s, &a.solver.options())?, a.out.as_deref())
        }
        Command::FitConstrained(a) => {
            let s = load(&a.data)?;
            emit(&fit_constrained(&s, a.mode, &a.solver.options())?, a.out.as_deref())
        }
        Command::Lrtest(a) => {
            let s = load(&a.data)?;
            let table = load_table(a.table.as_deref())?;
            let r = lr_test(&s, a.mode, a.alpha, &table, &a.solver.options())?;
            emit(&r, a.out.as_deref())
        }
        Command::Ci(a) => {
            let s = load(&a.data)?;
            let table = load_table(a.table.as_deref())?;
            let grid = grid_options(a.grid)?;
            let alphas = match (&a.alpha, &a.levels) {
                (_, Some(levels)) => levels_to_alphas(levels)?,
                (Some(alpha), None) => vec![*alpha],
                (None, None) => vec![0.05],
            };
            let cis = confidence_intervals(&s, &alphas, &table, &grid, &a.solver.options())?;
            if a.levels.is_some() {
                emit(&cis, a.out.as_deref())
            } else {
                emit(&cis[0], a.out.as_deref())
            }
        }
        Command::SimulateNull(a) => {
            let dist = parse_dist(&a.dist)?;
            let seed = require_seed(a.seed)?;
            let eng = engine(&a.solver, GridOptions::default());
            let report = simulate_null(&dist, a.n, a.reps, seed, &eng)?;
            match a.out.as_deref() {
                Some(path) if has_ext(path, "csv") => {
                    let mut csv = String::from("replication,stat\n");
                    for (i, s) in report.statistics.iter().enumerate() {
                        csv.push_str(&format!("{i},{}\n", modecert::io::format_g17(*s)));
                    }
                    std::fs::write(path, csv).map_err(Error::from)?;
                    emit(&report, None)
                }
                Some(path) => {
                    let table = table_from_statistics(
                        &report.statistics,
                        &default_table_alphas(),
                        TableMeta {
                            dist: dist.to_string(),
                            n: a.n,
                            reps: a.reps,
                            seed,
                            quantile: "type7".into(),
                        },
                    )?;
                    write_json_file(path, &table)?;
                    emit(&report, None)
                }
                None => emit(&report, None),
            }
        }
        Command::Coverage(a) => {
            let dist = parse_dist(&a.dist)?;
            let seed = require_seed(a.seed)?;
            let table = load_table(a.table.as_deref())?;
            levels_to_alphas(&a.levels)?;
            let eng = engine(&a.solver, grid_options(a.grid)?);
            let report = coverage_study(&dist, a.n, a.reps, &a.levels, seed, &table, &eng)?;
            emit(&report, a.out.as_deref())
        }
        Command::LaplaceExample(a) => {
            let p = laplace_projection(a.mode)?;
            emit(&p, a.out.as_deref())
        }
    }
}

fn emit<T: Serialize + ?Sized>(value: &T, out: Option<&Path>) -> CliResult<String> {
    match out {
        Some(path) => {
            write_json_file(path, value)?;
            Ok(String::new())
        }
        None => Ok(to_json_string(value)?),
    }
}

fn load(d: &DataArgs) -> CliResult<Sample> {
    match (&d.input, &d.dist) {
        (Some(path), None) => Ok(read_sample(path)?),
        (None, Some(spec)) => {
            let dist = parse_dist(spec)?;
            let n = d.n.ok_or_else(|| usage("--dist needs --n"))?;
            let seed = require_seed(d.seed)?;
            Ok(dist.sample(n, seed)?)
        }
        (None, None) => Err(usage("one of --input or --dist is required")),
        (Some(_), Some(_)) => Err(usage("--input and --dist are mutually exclusive")),
    }
}

fn load_table(path: Option<&Path>) -> CliResult<CriticalValueTable> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(Error::from)?;
            Ok(CriticalValueTable::from_json(&text)?)
        }
        None => Ok(CriticalValueTable::default_table().clone()),
    }
}

fn parse_dist(spec: &str) -> CliResult<ReferenceDistribution> {
    Ok(spec.parse::<ReferenceDistribution>()?)
}

fn require_seed(seed: Option<u64>) -> CliResult<u64> {
    seed.ok_or_else(|| usage("--seed is required for random data"))
}

fn levels_to_alphas(levels: &[f64]) -> CliResult<Vec<f64>> {
    if levels.is_empty() || levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        return Err(usage("levels must lie strictly between 0 and 1"));
    }
    Ok(levels.iter().map(|l| 1.0 - l).collect())
}

fn grid_options(points: usize) -> CliResult<GridOptions> {
    if points < 3 {
        return Err(usage("--grid needs at least 3 points"));
    }
    Ok(GridOptions {
        points,
        ..GridOptions::default()
    })
}

fn engine(solver: &SolverArgs, grid: GridOptions) -> EngineOptions {
    EngineOptions {
        solver: solver.options(),
        grid,
        threads: None,
    }
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn usage(msg: &str) -> CliError {
    CliError::Usage(msg.to_string())
}
