//! Command-line front end for `mixdist`.
//!
//! [`run`] parses arguments, dispatches to a subcommand and maps the outcome
//! to an exit code: `0` on success, `2` on a usage error and `1` when the
//! command itself fails.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mixdist::divergences::Divergence;
use mixdist::experiments::{
    chi2_study, fixed_suite, rate_study, solver_comparison, write_comparison_csv, StudyConfig,
};
use mixdist::hermite::{error_envelope, taylor_approx, LipschitzTestFn};
use mixdist::kernels::KernelSpec;
use mixdist::measures::{read_samples, AtomicMeasure, EmpiricalPmf};
use mixdist::solver::{solve, Method, SolverConfig};
use mixdist::transport::{got_w1, w1, GotConfig};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "mixdist",
    version,
    about = "Minimum-distance estimation of mixing distributions"
)]
pub struct Cli {
    /// Print progress details to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a mixing distribution to integer samples.
    Estimate(EstimateArgs),
    /// W1 (and smoothed W1) between two measures.
    Distance(DistanceArgs),
    /// Monte Carlo convergence-rate study.
    Rates(StudyArgs),
    /// Monte Carlo study of the chi-square distance at the truth.
    Chi2(Chi2Args),
    /// Taylor approximation of smoothed Lipschitz functions.
    Approx(ApproxArgs),
    /// VDM, ISDM and the grid oracle on the fixed instance suite.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Sample file, one integer per row, optional header.
    #[arg(long)]
    pub input: PathBuf,
    /// Kernel family: poisson or geometric.
    #[arg(long, default_value = "poisson")]
    pub kernel: String,
    /// Upper end of the parameter range [0, θ*].
    #[arg(long, allow_negative_numbers = true)]
    pub theta_star: f64,
    /// Divergence: hellinger2, lecam, js, kl or chi2.
    #[arg(long, default_value = "kl")]
    pub divergence: String,
    /// Solver: vdm or isdm.
    #[arg(long, default_value = "vdm")]
    pub method: String,
    /// Where to write the fitted measure (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-iteration trace (CSV).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverOverrides,
}

#[derive(Debug, Args)]
pub struct SolverOverrides {
    /// Points in the λ search grid [default: 512].
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Golden-section steps per refined grid minimum [default: 60].
    #[arg(long)]
    pub refine_iters: Option<usize>,
    /// Stop once every directional derivative is at least −tol [default: 1e-8].
    #[arg(long)]
    pub stop_tol: Option<f64>,
    /// Cap on outer iterations [default: 500].
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Location of the starting point mass [default: θ*/2].
    #[arg(long, allow_negative_numbers = true)]
    pub initial_location: Option<f64>,
    /// Plain vertex steps without re-solving the weights.
    #[arg(long)]
    pub no_polish: bool,
}

#[derive(Debug, Args)]
pub struct DistanceArgs {
    /// First measure (JSON).
    #[arg(long)]
    pub a: PathBuf,
    /// Second measure (JSON).
    #[arg(long)]
    pub b: PathBuf,
    /// Smoothing standard deviation; also prints the smoothed distance.
    #[arg(long, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// JSON study configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Per-sample-size report (CSV).
    #[arg(long)]
    pub out: PathBuf,
    /// Per-replication results (CSV).
    #[arg(long)]
    pub replications: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Chi2Args {
    /// JSON study configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Per-sample-size report (CSV).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ApproxArgs {
    /// Smoothing standard deviation.
    #[arg(long, allow_negative_numbers = true)]
    pub sigma: f64,
    /// Approximation interval [0, θ*].
    #[arg(long, allow_negative_numbers = true)]
    pub theta_star: f64,
    /// Comma-separated numbers of Taylor coefficients k.
    #[arg(long, value_delimiter = ',', default_value = "5,10,15")]
    pub degrees: Vec<u32>,
    /// Test function: identity or shifted_abs (kinked at θ*/2).
    #[arg(long, default_value = "shifted_abs")]
    pub function: String,
    /// Output table (CSV).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Output table (CSV).
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub solver: SolverOverrides,
}

/// Failure of a command, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Core(#[from] mixdist::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CliError::Io {
            context: format!("cannot read {}", path.display()),
            source,
        })
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io {
            context: format!("cannot write {}", path.display()),
            source,
        })
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        context: format!("cannot read {}", path.display()),
        source,
    })
}

fn positive(name: &str, v: f64) -> CliResult<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(usage(format!("--{name} must be positive, got {v}")))
    }
}

fn parse_or_usage<T: std::str::FromStr<Err = mixdist::Error>>(flag: &str, s: &str) -> CliResult<T> {
    s.parse()
        .map_err(|e: mixdist::Error| usage(format!("--{flag}: {e}")))
}

fn solver_config(div: Divergence, o: &SolverOverrides) -> CliResult<SolverConfig> {
    let mut cfg = SolverConfig::new(div);
    if let Some(v) = o.grid_size {
        if v < 2 {
            return Err(usage("--grid-size must be at least 2"));
        }
        cfg.grid_size = v;
    }
    if let Some(v) = o.refine_iters {
        cfg.refine_iters = v;
    }
    if let Some(v) = o.stop_tol {
        if !(v >= 0.0) {
            return Err(usage("--stop-tol must be nonnegative"));
        }
        cfg.stop_tol = v;
    }
    if let Some(v) = o.max_iters {
        cfg.max_outer_iters = v;
    }
    cfg.initial_location = o.initial_location;
    cfg.polish_weights = !o.no_polish;
    Ok(cfg)
}

/// Runs the CLI on `argv` (including the program name), writing normal
/// output to `out` and diagnostics to `err`. Returns the exit code.
pub fn run_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match dispatch(&cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

/// [`run_with`] on the process's stdout and stderr.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Estimate(a) => estimate(a, cli.verbose, out, err),
        Command::Distance(a) => distance(a, out),
        Command::Rates(a) => rates(a, out),
        Command::Chi2(a) => chi2(a, out),
        Command::Approx(a) => approx(a, out),
        Command::Compare(a) => compare(a, out),
    }
}

fn emit(out: &mut dyn Write, line: std::fmt::Arguments<'_>) -> CliResult<()> {
    writeln!(out, "{line}").map_err(|source| CliError::Io {
        context: "cannot write output".into(),
        source,
    })
}

fn estimate(
    a: &EstimateArgs,
    verbose: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult<()> {
    let theta_star = positive("theta-star", a.theta_star)?;
    let kernel =
        KernelSpec::by_name(&a.kernel, theta_star).map_err(|e| usage(format!("--kernel: {e}")))?;
    let div: Divergence = parse_or_usage("divergence", &a.divergence)?;
    let method: Method = parse_or_usage("method", &a.method)?;
    let cfg = solver_config(div, &a.solver)?;
    cfg.validate(theta_star).map_err(|e| usage(e.to_string()))?;

    let samples = read_samples(open(&a.input)?)?;
    let emp = EmpiricalPmf::from_samples(&samples)?;
    if verbose {
        let _ = writeln!(
            err,
            "{} samples, {} distinct values, {} kernel, theta* = {theta_star}",
            emp.n(),
            emp.support_size(),
            kernel.name()
        );
    }
    let (fit, trace) = solve(method, &emp, &kernel, &cfg)?;
    fit.write_json(&a.out)?;
    if let Some(path) = &a.trace {
        let mut w = create(path)?;
        trace.write_csv(&mut w)?;
    }
    emit(out, format_args!("status {}", trace.status))?;
    emit(out, format_args!("objective {}", trace.final_objective()))?;
    emit(
        out,
        format_args!("min_derivative {}", trace.final_min_derivative()),
    )?;
    emit(out, format_args!("iterations {}", trace.iterations()))?;
    emit(out, format_args!("atoms {}", fit.len()))
}

fn distance(a: &DistanceArgs, out: &mut dyn Write) -> CliResult<()> {
    let sigma = a.sigma.map(|s| positive("sigma", s)).transpose()?;
    let ga = AtomicMeasure::from_json(&read_text(&a.a)?)?;
    let gb = AtomicMeasure::from_json(&read_text(&a.b)?)?;
    emit(out, format_args!("w1 {}", w1(&ga, &gb)))?;
    if let Some(s) = sigma {
        let v = got_w1(&ga, &gb, &GotConfig::new(s)?)?;
        emit(out, format_args!("got_w1 {v}"))?;
    }
    Ok(())
}

fn study_config(path: &Path) -> CliResult<StudyConfig> {
    let cfg = StudyConfig::from_json(&read_text(path)?)?;
    positive("theta_star", cfg.theta_star)?;
    Ok(cfg)
}

fn write_csv_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> mixdist::Result<()>,
) -> CliResult<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush().map_err(|source| CliError::Io {
        context: format!("cannot write {}", path.display()),
        source,
    })
}

fn rates(a: &StudyArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = study_config(&a.config)?;
    let report = rate_study(&cfg.rate_study()?)?;
    write_csv_file(&a.out, |w| report.write_csv(w))?;
    if let Some(path) = &a.replications {
        write_csv_file(path, |w| report.write_replications_csv(w))?;
    }
    if cfg.sigma * cfg.sigma < 4.0 * cfg.theta_star {
        emit(
            out,
            format_args!("regime sigma^2 < 4 theta_star (reported only)"),
        )?;
    }
    emit(out, format_args!("slope_got_w1 {}", report.slope_got_w1))?;
    emit(out, format_args!("slope_w1 {}", report.slope_w1))?;
    emit(
        out,
        format_args!("pathwise_violations {}", report.pathwise_violations),
    )
}

fn chi2(a: &Chi2Args, out: &mut dyn Write) -> CliResult<()> {
    let cfg = study_config(&a.config)?;
    let report = chi2_study(&cfg.chi2_study()?)?;
    write_csv_file(&a.out, |w| report.write_csv(w))?;
    emit(
        out,
        format_args!("fitted_constant {}", report.fitted_constant),
    )?;
    emit(
        out,
        format_args!("all_under_bound {}", report.all_under_bound()),
    )
}

#[derive(Serialize)]
struct ApproxRow {
    degree: u32,
    coeff_shape_ratio: f64,
    sup_error: f64,
    bound_value: f64,
}

fn approx(a: &ApproxArgs, out: &mut dyn Write) -> CliResult<()> {
    let sigma = positive("sigma", a.sigma)?;
    let theta_star = positive("theta-star", a.theta_star)?;
    if a.degrees.is_empty() || a.degrees.iter().any(|&k| k == 0 || k > 41) {
        return Err(usage("--degrees must list values between 1 and 41"));
    }
    let f = match a.function.as_str() {
        "identity" => LipschitzTestFn::identity(),
        "shifted_abs" => LipschitzTestFn::shifted_abs(0.5 * theta_star),
        other => {
            return Err(usage(format!(
                "--function: unknown test function '{other}'"
            )))
        }
    };
    let mut degrees = a.degrees.clone();
    degrees.sort_unstable();
    degrees.dedup();
    let fits = degrees
        .iter()
        .map(|&k| taylor_approx(&f, sigma, k, theta_star))
        .collect::<mixdist::Result<Vec<_>>>()?;
    let c = fits[0].sup_error / error_envelope(sigma, degrees[0], theta_star);
    write_csv_file(&a.out, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for (fit, &k) in fits.iter().zip(&degrees) {
            csv.serialize(ApproxRow {
                degree: k,
                coeff_shape_ratio: fit.coeff_shape_ratio(),
                sup_error: fit.sup_error,
                bound_value: c * error_envelope(sigma, k, theta_star),
            })
            .map_err(mixdist::Error::from)?;
        }
        csv.flush()?;
        Ok(())
    })?;
    emit(out, format_args!("fitted_constant {c}"))
}

fn compare(a: &CompareArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = solver_config(Divergence::KullbackLeibler, &a.solver)?;
    let rows = solver_comparison(&fixed_suite()?, &cfg)?;
    write_csv_file(&a.out, |w| write_comparison_csv(&rows, w))?;
    let worst = rows.iter().map(|r| r.max_gap).fold(0.0, f64::max);
    emit(out, format_args!("cells {}", rows.len()))?;
    emit(out, format_args!("max_gap {worst}"))
}
