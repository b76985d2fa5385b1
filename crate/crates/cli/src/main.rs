use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use parareal_cli::{exit, run_experiment, ExperimentConfig, RunError};
use parareal_core::problems::Benchmark;

/// Runs a hybrid Parareal experiment and writes CSV/JSON artifacts.
#[derive(Debug, Parser)]
#[command(name = "parareal", version)]
struct Args {
    /// Benchmark id: sir, rober, lorenz, arenstorf, brusselator or burgers.
    #[arg(long)]
    benchmark: Option<String>,
    /// JSON config; its values override the benchmark defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed of the network basis sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the fine sweep (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Number of timed solves.
    #[arg(long)]
    repeats: Option<usize>,
    /// Compute error certificates for every interval.
    #[arg(long)]
    certify: bool,
    /// Record the node states of every iterate in trace.csv.
    #[arg(long)]
    trace: bool,
    /// Parareal stopping tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Maximum number of Parareal iterations.
    #[arg(long = "max-it")]
    max_it: Option<usize>,
}

fn load(args: &Args) -> Result<ExperimentConfig, RunError> {
    let benchmark = args
        .benchmark
        .as_deref()
        .map(|b| b.parse::<Benchmark>().map_err(|e| RunError::Config(e.to_string())))
        .transpose()?;
    let mut config = match (&args.config, benchmark) {
        (Some(path), bench) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text, bench)?
        }
        (None, Some(bench)) => ExperimentConfig::defaults(bench),
        (None, None) => return Err(RunError::Config("give --benchmark or --config".into())),
    };
    if let Some(out) = &args.out {
        config.out = out.clone();
    }
    if let Some(seed) = args.seed {
        config.rpnn.seed = seed;
    }
    if let Some(workers) = args.workers {
        config.workers = workers;
    }
    if let Some(repeats) = args.repeats {
        config.repeats = repeats;
    }
    if let Some(tol) = args.tol {
        config.tol = tol;
    }
    if let Some(max_it) = args.max_it {
        config.max_it = max_it;
    }
    config.certify |= args.certify;
    config.trace |= args.trace;
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let config = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run_experiment(&config) {
        Ok(outcome) => {
            let r = &outcome.result;
            println!(
                "{}: {} iterations, stopping error {:.3e}, max node error vs serial {:.3e}",
                config.benchmark,
                r.iterations,
                r.error_history.last().copied().unwrap_or(0.0),
                outcome.comparison.max_euclidean
            );
            println!(
                "mean coarse step (zeroth iterate) {:.4}s, mean total {:.4}s over {} run(s); artifacts in {}",
                outcome.timings.zeroth_step_mean,
                outcome.timings.total.mean,
                outcome.timings.repeats,
                config.out.display()
            );
            if r.converged {
                ExitCode::from(exit::SUCCESS as u8)
            } else {
                eprintln!("not converged after {} iterations", r.iterations);
                ExitCode::from(exit::NOT_CONVERGED as u8)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
