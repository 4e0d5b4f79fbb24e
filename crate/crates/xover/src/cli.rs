//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use xover_core::{
    build_covariance, construct_oa_all_permutations, construct_oa_modular, efficiency_curve,
    information_matrix, verify_oa, CurveFamily, Matrix, MatrixClassReport, OaCertificate, RGrid,
    DEFAULT_ENUMERATION_CAP,
};

use crate::covspec::parse_cov_spec;
use crate::error::{CliError, Result};
use crate::fmt::g12;
use crate::io::{self, DesignFile};
use crate::search::parallel_search;
use crate::verify::{self, Suite, VerifyOptions};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const CAP_ENV: &str = "XOVER_CAP";

#[derive(Debug, Parser)]
#[command(name = "xover", version, about = "Multivariate crossover design information and optimality")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Information matrix and classification report for one design.
    Evaluate(EvaluateArgs),
    /// Build and certify an orthogonal array design.
    ConstructOa(ConstructArgs),
    /// Exhaustive trace maximization over binary designs.
    Search(SearchArgs),
    /// Efficiency of a design against a reference over a correlation grid.
    Curve(CurveArgs),
    /// Run the built-in numerical self-checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub design: PathBuf,
    /// identity | ar1:<r> | tridiag:<r> | custom:<path>
    #[arg(long, default_value = "identity")]
    pub cov: String,
    #[arg(long, default_value_t = 1)]
    pub g: usize,
    /// JSON report path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the t×t block, as CSV for `.csv` paths and JSON otherwise.
    #[arg(long)]
    pub matrix_out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    AllPerms,
    Modular,
}

#[derive(Debug, Args, Serialize)]
pub struct ConstructArgs {
    #[arg(long)]
    pub t: usize,
    #[arg(long, value_enum, default_value = "all-perms")]
    pub method: Method,
    /// Design file path (`.csv` for CSV); standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SearchArgs {
    #[arg(long)]
    pub t: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value = "identity")]
    pub cov: String,
    #[arg(long, default_value_t = 1)]
    pub g: usize,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Ar1,
    Tridiag,
}

impl From<Family> for CurveFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Ar1 => CurveFamily::Ar1,
            Family::Tridiag => CurveFamily::Tridiagonal,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct CurveArgs {
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long)]
    pub dstar: PathBuf,
    #[arg(long, value_enum)]
    pub family: Family,
    /// Defaults to -0.99 (ar1) or -0.70 (tridiag).
    #[arg(long, allow_hyphen_values = true)]
    pub r_min: Option<f64>,
    /// Defaults to 0.99 (ar1) or 0.70 (tridiag).
    #[arg(long, allow_hyphen_values = true)]
    pub r_max: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long, default_value_t = 1)]
    pub g: usize,
    /// CSV path; without it only the summary is printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    /// Run a single suite; all suites when absent.
    #[arg(long, value_enum)]
    pub suite: Option<Suite>,
    #[arg(long)]
    pub t: Option<usize>,
    /// Override every suite's tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything that determined a run, embedded in each report.
#[derive(Debug, Serialize)]
pub struct RunConfig<'a, A: Serialize> {
    pub command: &'static str,
    #[serde(flatten)]
    pub args: &'a A,
    pub enumeration_cap: u64,
}

#[derive(Debug, Serialize)]
struct Report<'a, A: Serialize, B: Serialize> {
    version: &'static str,
    config: RunConfig<'a, A>,
    #[serde(flatten)]
    body: B,
}

/// Enumeration cap, overridden by the `XOVER_CAP` environment variable.
pub fn enumeration_cap() -> Result<u64> {
    match std::env::var(CAP_ENV) {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map_err(|_| CliError::Usage(format!("{CAP_ENV}={v:?} is not a non-negative integer"))),
        Err(_) => Ok(DEFAULT_ENUMERATION_CAP),
    }
}

fn check_g(g: usize) -> Result<()> {
    if g == 0 {
        Err(CliError::Usage("--g must be at least 1".into()))
    } else {
        Ok(())
    }
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => io::write_json(path, value),
        None => {
            let s = serde_json::to_string_pretty(value).expect("report serializes");
            writeln!(stdout, "{s}").map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

fn say(stdout: &mut dyn Write, line: &str) -> Result<()> {
    writeln!(stdout, "{line}").map_err(|e| CliError::io("<stdout>", e))
}

#[derive(Debug, Serialize)]
struct EvaluateBody {
    t: usize,
    n: usize,
    p: usize,
    g: usize,
    binary: bool,
    labels: Vec<String>,
    block: Matrix,
    block_trace: f64,
    trace: f64,
    classification: MatrixClassReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    oa_certificate: Option<OaCertificate>,
}

fn evaluate(args: &EvaluateArgs, cap: u64, stdout: &mut dyn Write) -> Result<()> {
    check_g(args.g)?;
    let loaded = io::read_design(&args.design)?;
    let d = &loaded.design;
    let cov = build_covariance(&parse_cov_spec(&args.cov)?, d.p())?;
    let info = information_matrix(d, &cov, args.g)?;
    if let Some(path) = &args.matrix_out {
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            io::write_text(path, &io::matrix_to_csv(&info.block))?;
        } else {
            io::write_json(path, &info.block)?;
        }
    }
    let body = EvaluateBody {
        t: d.t(),
        n: d.n(),
        p: d.p(),
        g: args.g,
        binary: loaded.binary,
        labels: loaded.labels.clone(),
        block_trace: info.block.trace(),
        trace: info.trace(),
        classification: info.report.clone(),
        oa_certificate: (d.p() == d.t()).then(|| verify_oa(d)),
        block: info.block,
    };
    let report = Report {
        version: VERSION,
        config: RunConfig {
            command: "evaluate",
            args,
            enumeration_cap: cap,
        },
        body,
    };
    emit(args.out.as_deref(), &report, stdout)
}

fn construct(args: &ConstructArgs, cap: u64, stdout: &mut dyn Write) -> Result<()> {
    let d = match args.method {
        Method::AllPerms => construct_oa_all_permutations(args.t, cap)?,
        Method::Modular => construct_oa_modular(args.t)?,
    };
    let cert = verify_oa(&d);
    let lambda = match (cert.passed, cert.lambda) {
        (true, Some(l)) => l,
        _ => return Err(xover_core::Error::NotAnOa.into()),
    };
    let summary = format!("n = {}, lambda = {lambda}", d.n());
    match &args.out {
        Some(path) => {
            io::write_design(path, &d, None)?;
            say(stdout, &summary)
        }
        None => {
            eprintln!("{summary}");
            write!(stdout, "{}", io::design_to_json(&d, None)).map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

#[derive(Debug, Serialize)]
struct SearchBody {
    t: usize,
    n: usize,
    g: usize,
    best_trace: f64,
    evaluated_count: u64,
    oa_attains_max: bool,
    reference_oa_trace: Option<f64>,
    argmax_ranks: Vec<u64>,
    argmax: Vec<DesignFile>,
}

fn search(args: &SearchArgs, cap: u64, stdout: &mut dyn Write) -> Result<()> {
    check_g(args.g)?;
    let cov = build_covariance(&parse_cov_spec(&args.cov)?, args.t)?;
    let res = parallel_search(args.t, args.n, &cov, args.g, cap, args.workers)?;
    let body = SearchBody {
        t: res.t,
        n: res.n,
        g: res.g,
        best_trace: res.best_trace,
        evaluated_count: res.evaluated_count,
        oa_attains_max: res.oa_attains_max,
        reference_oa_trace: res.reference_oa_trace,
        argmax_ranks: res.argmax_ranks,
        argmax: res
            .argmax_designs
            .iter()
            .map(|d| DesignFile::from_design(d, None))
            .collect(),
    };
    let report = Report {
        version: VERSION,
        config: RunConfig {
            command: "search",
            args,
            enumeration_cap: cap,
        },
        body,
    };
    emit(args.out.as_deref(), &report, stdout)
}

/// The curve CSV, header `r,trace_d,trace_dstar,efficiency`.
pub fn curve_csv(points: &[xover_core::CurvePoint]) -> String {
    let mut out = String::from("r,trace_d,trace_dstar,efficiency\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            g12(p.r),
            g12(p.trace_d),
            g12(p.trace_dstar),
            g12(p.efficiency)
        ));
    }
    out
}

fn curve(args: &CurveArgs, stdout: &mut dyn Write) -> Result<()> {
    check_g(args.g)?;
    let d = io::read_design(&args.design)?.design;
    let d_star = io::read_design(&args.dstar)?.design;
    let family = CurveFamily::from(args.family);
    let default = family.default_grid();
    let grid = RGrid {
        min: args.r_min.unwrap_or(default.min),
        max: args.r_max.unwrap_or(default.max),
        step: args.step,
    };
    let curve = efficiency_curve(&d, &d_star, family, grid, args.g)?;
    if let Some(path) = &args.out {
        io::write_text(path, &curve_csv(&curve.points))?;
    }
    say(stdout, &format!("e_max = {}", g12(curve.e_max)))?;
    say(stdout, &format!("argmax_r = {}", g12(curve.argmax_r)))
}

fn run_verify(args: &VerifyArgs, stdout: &mut dyn Write) -> Result<()> {
    let opts = VerifyOptions {
        suite: args.suite,
        t: args.t,
        tol: args.tol,
        seed: args.seed,
    };
    let summary = verify::run(&opts)?;
    let report = Report {
        version: VERSION,
        config: RunConfig {
            command: "verify",
            args,
            enumeration_cap: enumeration_cap()?,
        },
        body: &summary,
    };
    emit(args.out.as_deref(), &report, stdout)?;
    if summary.passed {
        Ok(())
    } else {
        Err(CliError::VerifyFailed {
            failed: summary.failed(),
            total: summary.suites.len(),
        })
    }
}

/// Runs one parsed command line, writing normal output to `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Evaluate(a) => evaluate(a, enumeration_cap()?, stdout),
        Command::ConstructOa(a) => construct(a, enumeration_cap()?, stdout),
        Command::Search(a) => search(a, enumeration_cap()?, stdout),
        Command::Curve(a) => curve(a, stdout),
        Command::Verify(a) => run_verify(a, stdout),
    }
}
