//! Command-line front end: one subcommand per experiment task.
//!
//! Exit codes: 0 all assertions passed, 1 assertion failure, 2 usage or
//! config error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use divprice::experiment::{run_experiment, ExperimentConfig, ExperimentError, Report, TaskKind};

#[derive(Parser)]
#[command(
    name = "divprice",
    version,
    about = "Sequential posted pricing of a divisible good: simulation, calibration, and revenue analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the per-unit price to a target expected sold fraction.
    Calibrate(RunArgs),
    /// Estimate the welfare ratio of posted pricing against the optimum.
    WelfareRatio(RunArgs),
    /// Compute the ex-ante revenue upper bound, the best linear revenue,
    /// and the curvature gap certificate.
    RevenueGap(RunArgs),
    /// Evaluate the high-curvature lower-bound instance.
    LowerBound(RunArgs),
    /// Run the randomized lemma verification suites.
    VerifyLemmas(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.json and curve CSVs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config sample count.
    #[arg(long)]
    samples: Option<u64>,
}

impl Command {
    fn task(&self) -> TaskKind {
        match self {
            Command::Calibrate(_) => TaskKind::Calibrate,
            Command::WelfareRatio(_) => TaskKind::WelfareRatio,
            Command::RevenueGap(_) => TaskKind::RevenueGap,
            Command::LowerBound(_) => TaskKind::LowerBound,
            Command::VerifyLemmas(_) => TaskKind::VerifyLemmas,
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Calibrate(a)
            | Command::WelfareRatio(a)
            | Command::RevenueGap(a)
            | Command::LowerBound(a)
            | Command::VerifyLemmas(a) => a,
        }
    }
}

fn print_report(report: &Report) {
    for (name, value) in &report.values {
        println!("{name} = {value}");
    }
    for (name, est) in &report.estimates {
        println!(
            "{name} = {} (stderr {}, {} samples)",
            est.mean, est.stderr, est.samples
        );
    }
    for check in &report.checks {
        let status = if check.passed { "PASS" } else { "FAIL" };
        println!(
            "[{status}] {}: lhs {} vs rhs {} (margin {}, tolerance {})",
            check.name, check.lhs, check.rhs, check.margin, check.tolerance
        );
    }
    for flag in &report.flags {
        eprintln!("warning: {flag}");
    }
    eprintln!("wall clock: {:.3}s", report.wall_clock.as_secs_f64());
}

fn run(cli: Cli) -> Result<bool, ExperimentError> {
    let task = cli.command.task();
    let args = cli.command.args();
    let mut config = ExperimentConfig::from_path(&args.config)?;
    if config.task != task {
        return Err(ExperimentError::Invalid(format!(
            "config task `{}` does not match subcommand `{}`",
            config.task.name(),
            task.name()
        )));
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(samples) = args.samples {
        config.samples = samples;
    }
    let report = run_experiment(&config, args.out.as_deref())?;
    print_report(&report);
    Ok(report.all_passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
