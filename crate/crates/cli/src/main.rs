//! `lyapopt` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage or configuration error,
//! 3 estimator validation failure, 4 every training run diverged.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use chrono::{DateTime, Timelike, Utc};
use clap::{Parser, Subcommand};

use lyapopt::config::{load_config, ResolvedConfig, TrajectoryKind};
use lyapopt::dynamics::{integrate_gradient_flow, run_training_trajectory, simulate_linear_ode, simulate_lorenz};
use lyapopt::experiments::{compare_activations, initial_ensemble, select_initial_weights, sweep_learning_rate};
use lyapopt::lyapunov::{auto_epsilon, estimate_lle_detailed};
use lyapopt::report::{
    write_report, ContributionsReport, Format, OutputMeta, Report, TrajectoryReport, ValidationReport,
};
use lyapopt::{validation, EstimatorConfig, LinearSystem2D, LogBase, Trajectory};

#[derive(Parser, Debug)]
#[command(name = "lyapopt", version, about = "Lyapunov exponents of gradient-descent training")]
struct Cli {
    /// key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, default_value = "results", global = true)]
    output_dir: PathBuf,
    /// csv, json or both
    #[arg(long, default_value = "csv", global = true)]
    format: Format,
    /// Fixed generation time (RFC 3339) for reproducible output
    #[arg(long, global = true)]
    timestamp: Option<DateTime<Utc>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Mean exponent per learning rate over all seeds
    SweepLr,
    /// Sigmoid, Linear and ReLU hidden layers at one learning rate
    CompareActivations,
    /// Rank IQR-filtered initialisations by their local exponent
    SelectInit,
    /// Check the estimator against linear-ODE and Lorenz references
    ValidateEstimator,
    /// Write one trajectory (and optionally estimator diagnostics)
    DumpTrajectory,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::SweepLr => "sweep-lr",
            Command::CompareActivations => "compare-activations",
            Command::SelectInit => "select-init",
            Command::ValidateEstimator => "validate-estimator",
            Command::DumpTrajectory => "dump-trajectory",
        }
    }
}

enum Failure {
    Usage(anyhow::Error),
    Validation,
    AllDiverged,
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Validation) => {
            eprintln!("error: estimator validation failed");
            ExitCode::from(3)
        }
        Err(Failure::AllDiverged) => {
            eprintln!("error: every training run diverged");
            ExitCode::from(4)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("LYAPOPT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(anyhow!("LYAPOPT_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring thread pool")?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    configure_threads()?;
    let cfg = load_config(cli.config.as_deref(), &cli.overrides).map_err(|e| Failure::Usage(e.into()))?;
    let generated_at = cli
        .timestamp
        .unwrap_or_else(|| Utc::now().with_nanosecond(0).expect("zero nanoseconds is valid"));
    let meta = OutputMeta {
        subcommand: cli.command.name().to_string(),
        config: cfg.entries(),
        seeds: cfg.experiment.seeds.clone(),
        generated_at,
    };
    let out = Output {
        meta: &meta,
        format: cli.format,
        dir: &cli.output_dir,
    };
    match cli.command {
        Command::SweepLr => sweep(&cfg, &out),
        Command::CompareActivations => compare(&cfg, &out),
        Command::SelectInit => select(&cfg, &out),
        Command::ValidateEstimator => validate(&out),
        Command::DumpTrajectory => dump(&cfg, &out),
    }
}

struct Output<'a> {
    meta: &'a OutputMeta,
    format: Format,
    dir: &'a Path,
}

impl Output<'_> {
    fn write(&self, report: &dyn Report, suffix: Option<&str>) -> Result<(), Failure> {
        let paths = write_report(report, self.meta, suffix, self.format, self.dir).context("writing report")?;
        for p in paths {
            println!("{}", p.display());
        }
        Ok(())
    }
}

fn sweep(cfg: &ResolvedConfig, out: &Output) -> Result<(), Failure> {
    let exp = &cfg.experiment;
    if exp.alphas.is_empty() {
        return Err(Failure::Usage(anyhow!("alphas: learning-rate grid is empty")));
    }
    let report = sweep_learning_rate(exp, &exp.alphas).context("learning-rate sweep")?;
    out.write(&report, None)?;
    if report.rows.iter().all(|r| r.run.diverged) {
        return Err(Failure::AllDiverged);
    }
    Ok(())
}

fn compare(cfg: &ResolvedConfig, out: &Output) -> Result<(), Failure> {
    let exp = &cfg.experiment;
    let report = compare_activations(exp, exp.learning_rate).context("activation comparison")?;
    out.write(&report, None)?;
    if report.rows.iter().all(|r| r.run.diverged) {
        return Err(Failure::AllDiverged);
    }
    Ok(())
}

fn select(cfg: &ResolvedConfig, out: &Output) -> Result<(), Failure> {
    let exp = &cfg.experiment;
    let probe = exp.probe_steps.unwrap_or(exp.steps);
    let report = select_initial_weights(exp, exp.learning_rate, probe).context("initial-weight selection")?;
    out.write(&report, None)?;
    if report.rows.iter().filter(|r| r.kept).all(|r| r.diverged) {
        return Err(Failure::AllDiverged);
    }
    println!("recommended seed: {}", report.recommended_seed);
    Ok(())
}

fn validate(out: &Output) -> Result<(), Failure> {
    let report = ValidationReport {
        checks: validation::run_all().context("running reference systems")?,
    };
    println!(
        "{:<32} {:>14} {:>14} {:>10} {:<10} result",
        "system", "expected", "estimated", "tolerance", "units"
    );
    for c in &report.checks {
        println!(
            "{:<32} {:>14.6} {:>14.6} {:>10.4} {:<10} {}",
            c.system,
            c.expected,
            c.estimated,
            c.tolerance,
            c.units,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
    out.write(&report, None)?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Validation)
    }
}

fn dump(cfg: &ResolvedConfig, out: &Output) -> Result<(), Failure> {
    let exp = &cfg.experiment;
    let t = &cfg.trajectory;
    let traj: Trajectory = match t.kind {
        TrajectoryKind::Training | TrajectoryKind::Flow => {
            let init = initial_ensemble(exp, exp.seeds[0]).swap_remove(0);
            if t.kind == TrajectoryKind::Training {
                run_training_trajectory(&exp.net, &init, &exp.dataset, exp.learning_rate, exp.steps)
            } else {
                integrate_gradient_flow(&exp.net, &init, &exp.dataset, t.dt, exp.steps)
            }
        }
        TrajectoryKind::Linear => {
            let [a, b, c, d] = t.linear_matrix;
            let x0 = [t.initial_state[0], t.initial_state[1]];
            simulate_linear_ode(&LinearSystem2D::new(a, b, c, d), x0, t.dt, exp.steps)
        }
        TrajectoryKind::Lorenz => {
            let x0 = [t.initial_state[0], t.initial_state[1], t.initial_state[2]];
            simulate_lorenz(&Default::default(), x0, t.dt, exp.steps)
        }
    }
    .context("generating trajectory")?;
    out.write(&TrajectoryReport(&traj), None)?;

    if t.contributions {
        let mut est: EstimatorConfig = exp.estimator;
        if !est.epsilon.is_finite() {
            est.epsilon = auto_epsilon(&traj, 1e-3);
        }
        let estimate = estimate_lle_detailed(&traj, &est).context("estimating exponent")?;
        let contributions = estimate.per_point_contributions.unwrap_or_default();
        out.write(&ContributionsReport(&contributions), Some("contributions"))?;
        let unit = match estimate.log_base {
            LogBase::Two => "bits",
            LogBase::E => "nats",
        };
        println!("lambda1: {} {unit} per unit time", estimate.lambda1);
    }
    Ok(())
}
