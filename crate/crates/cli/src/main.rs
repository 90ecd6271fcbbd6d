//! `spca`: relaxation solves, bound certificates, detection plans and the
//! seeded detection experiment.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use spca_core::bounds::{certify, RatioFunctions};
use spca_core::detect::{make_plan, RhoMode};
use spca_core::experiment::{run_experiment, ExperimentConfig};
use spca_core::io::read_matrix_file;
use spca_core::relax::{solve_psi_covariance, SolveOptions};
use spca_core::{CovarianceMatrix, Error, ModelConfig};

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "spca",
    version,
    about = "Semidefinite relaxation bounds for penalized sparse PCA"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certified interval on the relaxation value psi(rho) of a covariance matrix.
    Psi(PsiArgs),
    /// Approximation-ratio lower bound and randomized rounding.
    Bounds(BoundsArgs),
    /// Seeded H0/H1 detection experiment.
    Experiment(ExperimentArgs),
    /// Detection thresholds for one configuration.
    Plan(PlanArgs),
}

#[derive(Args)]
struct SolverArgs {
    /// Smoothing level in (0, 1); defaults to min(0.05, tol/4).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Target width of the certified interval.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value_t = 20_000)]
    max_iter: usize,
}

impl SolverArgs {
    fn options(&self) -> SolveOptions {
        SolveOptions {
            epsilon: self.epsilon,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Args)]
struct PsiArgs {
    /// Comma-separated covariance matrix, one row per line.
    matrix_file: PathBuf,
    #[arg(long)]
    rho: f64,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write the per-iteration trace as CSV.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    matrix_file: PathBuf,
    #[arg(long)]
    rho: f64,
    #[arg(long, default_value_t = 1_000_000)]
    mc_samples: usize,
    #[arg(long, default_value_t = 1000)]
    round_trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    /// Spike cardinality.
    #[arg(long)]
    k: usize,
    #[arg(long)]
    theta: f64,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    /// optimal, small, or manual:<value>.
    #[arg(long, default_value = "small")]
    rho_mode: String,
}

impl ModelArgs {
    fn config(&self, seed: u64) -> Result<(ModelConfig, RhoMode)> {
        let mode: RhoMode = self.rho_mode.parse()?;
        Ok((
            ModelConfig::new(self.n, self.m, self.k, self.theta, self.delta, seed)?,
            mode,
        ))
    }
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "SPCA_OUT_DIR", default_value = "spca-out")]
    out_dir: PathBuf,
    /// Certified-gap target per solve.
    #[arg(long, default_value_t = 0.1)]
    tol: f64,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    #[arg(long, default_value_t = 3000)]
    max_iter: usize,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    model: ModelArgs,
}

fn read_covariance(path: &PathBuf) -> Result<CovarianceMatrix> {
    let m = read_matrix_file(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(CovarianceMatrix::new(m)?)
}

fn print_toml<T: Serialize>(value: &T) -> Result<()> {
    print!("{}", toml::to_string(value)?);
    Ok(())
}

#[derive(Serialize)]
struct PsiReport {
    rho: f64,
    epsilon: f64,
    tol: f64,
    psi_lower: f64,
    psi_upper: f64,
    gap: f64,
    converged: bool,
    iterations: usize,
    rank: usize,
    original_dim: usize,
    kept: Vec<usize>,
}

fn cmd_psi(args: &PsiArgs) -> Result<()> {
    let sigma = read_covariance(&args.matrix_file)?;
    let solve = solve_psi_covariance(&sigma, args.rho, &args.solver.options())?;
    let r = &solve.result;
    if let Some(path) = &args.trace_out {
        let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        r.write_trace_csv(std::io::BufWriter::new(file))?;
    }
    print_toml(&PsiReport {
        rho: args.rho,
        epsilon: r.epsilon,
        tol: args.solver.tol,
        psi_lower: r.psi_lower,
        psi_upper: r.psi_upper,
        gap: r.gap(),
        converged: r.converged,
        iterations: r.iterations,
        rank: r.rank,
        original_dim: sigma.dim(),
        kept: solve.reduction.kept.clone(),
    })
}

#[derive(Serialize)]
struct BoundsReport {
    rho: f64,
    lower: f64,
    lower_std_error: f64,
    rounded_value: f64,
    relaxation: f64,
    psi_lower: f64,
    /// Rank and dimension used in the ratio function.
    r: usize,
    n: usize,
    mc_samples: usize,
    seed: u64,
    support: Vec<usize>,
    vector: Vec<f64>,
}

fn cmd_bounds(args: &BoundsArgs) -> Result<()> {
    let sigma = read_covariance(&args.matrix_file)?;
    let cfg = RatioFunctions::new(args.mc_samples, args.seed)?;
    let out = certify(
        &sigma,
        args.rho,
        &args.solver.options(),
        &cfg,
        args.round_trials,
        args.seed,
    )?;
    let c = &out.certificate;
    print_toml(&BoundsReport {
        rho: c.rho,
        lower: c.lower,
        lower_std_error: c.lower_std_error,
        rounded_value: out.rounded.value,
        relaxation: c.relaxation,
        psi_lower: out.solve.result.psi_lower,
        r: c.r,
        n: c.n,
        mc_samples: args.mc_samples,
        seed: args.seed,
        support: out.rounded.support.clone(),
        vector: out.rounded.vector.iter().copied().collect(),
    })
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<()> {
    let (model, mode) = args.model.config(args.seed)?;
    let cfg = ExperimentConfig {
        model,
        trials: args.trials,
        rho_mode: mode,
        tol: args.tol,
        max_iter: args.max_iter,
        epsilon: Some(args.epsilon),
    };
    let report = run_experiment(&cfg, &[])?;
    let written = report.write_outputs(&args.out_dir)?;
    print!("{}", report.summary_toml()?);
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    eprintln!("wall time {:.1} s", report.wall_seconds);
    Ok(())
}

fn cmd_plan(args: &PlanArgs) -> Result<()> {
    let (model, mode) = args.model.config(0)?;
    print!("{}", make_plan(&model, mode)?.to_toml()?);
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io(_) => EXIT_IO,
                e if e.is_numerical() => EXIT_NUMERICAL,
                _ => EXIT_INPUT,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    EXIT_INPUT
}

/// Error chain joined with ": ", skipping causes already quoted by their parent.
fn error_message(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Psi(a) => cmd_psi(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Plan(a) => cmd_plan(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", error_message(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
