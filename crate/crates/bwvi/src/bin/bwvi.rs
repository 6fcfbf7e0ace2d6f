//! Command-line front end: run experiment presets or JSON-configured
//! experiments, and expose the one-off diagnostics (estimator variance
//! comparison, convergence bounds, Laplace fit) as subcommands.
//!
//! Exit codes: 0 on success, 1 when the request itself is invalid (unknown
//! preset, malformed config), 2 when a valid request fails at run time.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use bwvi::diagnostics::{bound_convex, bound_strongly_convex, laplace_approx, variance_gap_empirical, BoundInputs};
use bwvi::gaussian::{Gaussian, RngState};
use bwvi::harness::{preset, run_experiment, ExperimentSpec, TargetSpec};
use bwvi::linalg::SpdMatrix;
use bwvi::targets::Target;
use bwvi::{Error, Result};

#[derive(Parser)]
#[command(
    name = "bwvi",
    version,
    about = "Gaussian variational inference by forward-backward steps in the Bures-Wasserstein geometry"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or JSON-configured experiment and write its artifacts
    Run(RunArgs),
    /// One-off diagnostics
    #[command(subcommand)]
    Diag(DiagCommand),
    /// Fit a Gaussian at the target mode (damped Newton on the potential)
    Laplace(LaplaceArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Built-in experiment name (see `run --preset help` for the list)
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Path to a JSON experiment spec
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: ./<experiment name>-out)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the replicate seeds with 1..=K
    #[arg(long)]
    seeds: Option<u64>,
    /// Override the step count of every algorithm template
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Subcommand)]
enum DiagCommand {
    /// Compare the plain and control-variate estimator variances near the target
    Variance(VarianceArgs),
    /// Evaluate the convergence bounds for given curvature and noise inputs
    Bounds(BoundsArgs),
}

#[derive(Args)]
struct TargetArgs {
    /// Target family: gaussian | student-t | logreg
    #[arg(long)]
    target: String,
    /// Dimension to instantiate the target in
    #[arg(long)]
    dim: usize,
    /// Seed of the target generator
    #[arg(long, default_value_t = 1)]
    data_seed: u64,
    /// Degrees of freedom (student-t only)
    #[arg(long, default_value_t = 4.0)]
    nu: f64,
    /// Number of synthetic data rows (logreg only)
    #[arg(long, default_value_t = 1000)]
    n_data: usize,
}

impl TargetArgs {
    fn build(&self) -> Result<Box<dyn Target>> {
        let spec = match self.target.as_str() {
            "gaussian" => TargetSpec::Gaussian { data_seed: self.data_seed },
            "student-t" | "student_t" => TargetSpec::StudentT {
                nu: self.nu,
                data_seed: self.data_seed,
            },
            "logreg" => TargetSpec::Logreg {
                n: self.n_data,
                data_seed: self.data_seed,
            },
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown target family '{other}' (expected gaussian, student-t, or logreg)"
                )))
            }
        };
        Ok(spec.build(self.dim)?.0)
    }
}

#[derive(Args)]
struct VarianceArgs {
    #[command(flatten)]
    target: TargetArgs,
    /// Control-variate coefficient of the reduced estimator
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Number of paired draws
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// RNG seed for the comparison draws
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Offset added to every coordinate of the reference mean
    #[arg(long, default_value_t = 0.3)]
    mean_shift: f64,
    /// The reference covariance is the base covariance divided by this factor
    #[arg(long, default_value_t = 1.05)]
    cov_shrink: f64,
}

#[derive(Args)]
struct BoundsArgs {
    /// Strong convexity constant of the potential (0 for merely convex)
    #[arg(long)]
    alpha: f64,
    /// Smoothness constant of the potential
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value_t = 0.001)]
    eta: f64,
    #[arg(long, default_value_t = 300)]
    steps: usize,
    #[arg(long, default_value_t = 10)]
    dim: usize,
    /// Worst-case per-iteration variance ratio
    #[arg(long, default_value_t = 1.0)]
    tau_inf: f64,
    /// Worst-case expected variance ratio
    #[arg(long, default_value_t = 1.0)]
    tau_e: f64,
    /// Squared distance of the initialization to the optimum
    #[arg(long, default_value_t = 1.0)]
    w0sq: f64,
    /// Largest eigenvalue of the optimal covariance
    #[arg(long, default_value_t = 1.0)]
    lambda_max: f64,
}

#[derive(Args)]
struct LaplaceArgs {
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::UnknownPreset(_) | Error::InvalidConfig(_) | Error::Json(_) => {
                    ExitCode::from(1)
                }
                _ => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => run_command(args),
        Command::Diag(DiagCommand::Variance(args)) => variance_command(args),
        Command::Diag(DiagCommand::Bounds(args)) => bounds_command(args),
        Command::Laplace(args) => laplace_command(args),
    }
}

fn run_command(args: RunArgs) -> Result<()> {
    let mut spec: ExperimentSpec = match (&args.preset, &args.config) {
        (Some(name), None) => preset(name)?,
        (None, Some(path)) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        _ => {
            return Err(Error::InvalidConfig(
                "pass exactly one of --preset or --config".into(),
            ))
        }
    };
    if let Some(k) = args.seeds {
        if k == 0 {
            return Err(Error::InvalidConfig("--seeds must be at least 1".into()));
        }
        spec.replicate_seeds = (1..=k).collect();
    }
    if let Some(n) = args.steps {
        for template in &mut spec.algorithms {
            template.steps = n;
        }
    }
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from(format!("{}-out", spec.name)));
    let manifest = run_experiment(&spec, &out)?;
    let diverged: usize = manifest.failures.values().sum();
    println!(
        "wrote {} replicate traces, aggregate.csv and manifest.json to {}",
        manifest.trace_files.len(),
        out.display()
    );
    if diverged > 0 {
        println!("note: {diverged} replicate(s) diverged; see manifest failures");
    }
    Ok(())
}

/// Reference state the variances are measured at: the closed-form optimum
/// when the target has one, otherwise the Laplace fit, with the mean then
/// shifted and the covariance shrunk so the comparison happens near but not
/// at the fixed point.
fn reference_state(target: &dyn Target, shift: f64, shrink: f64) -> Result<Gaussian> {
    if !(shrink > 0.0) {
        return Err(Error::InvalidConfig("--cov-shrink must be positive".into()));
    }
    let base = match target.optimum() {
        Some(g) => g.clone(),
        None => laplace_approx(target, &DVector::zeros(target.dim()), 200, 1e-8)?,
    };
    let mean = base.mean() + DVector::from_element(target.dim(), shift);
    let cov = SpdMatrix::from_symmetric_part(base.cov().as_matrix() / shrink)?;
    Gaussian::new(mean, cov)
}

fn variance_command(args: VarianceArgs) -> Result<()> {
    let target = args.target.build()?;
    let state = reference_state(&*target, args.mean_shift, args.cov_shrink)?;
    let mut rng = RngState::new(args.seed);
    let report = variance_gap_empirical(&*target, &state, args.c, args.n, &mut rng);
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn bounds_command(args: BoundsArgs) -> Result<()> {
    let inputs = BoundInputs {
        alpha: args.alpha,
        beta: args.beta,
        eta: args.eta,
        n_steps: args.steps,
        dim: args.dim,
        tau_max_inf: args.tau_inf,
        tau_max_e: args.tau_e,
        w2sq_init: args.w0sq,
        lambda_max_opt: args.lambda_max,
    };
    inputs.validate()?;
    let strongly_convex = match bound_strongly_convex(&inputs) {
        Ok(v) => serde_json::json!(v),
        Err(e) => serde_json::json!({ "error": e.to_string() }),
    };
    let out = serde_json::json!({
        "inputs": inputs,
        "convex": bound_convex(&inputs),
        "strongly_convex": strongly_convex,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn laplace_command(args: LaplaceArgs) -> Result<()> {
    let target = args.target.build()?;
    let fit = laplace_approx(&*target, &DVector::zeros(target.dim()), args.max_iter, args.tol)?;
    let cov = fit.cov().as_matrix();
    let rows: Vec<Vec<f64>> = (0..cov.nrows())
        .map(|i| cov.row(i).iter().copied().collect())
        .collect();
    let out = serde_json::json!({
        "mean": fit.mean().iter().copied().collect::<Vec<f64>>(),
        "cov": rows,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}
