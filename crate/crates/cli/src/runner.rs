//! Runs one configured experiment and writes its artifacts.

use std::fs;
use std::path::Path;

use parareal_core::certify::{certify_result, Certificate};
use parareal_core::collocation::TrainReport;
use parareal_core::integrators::serial_solve;
use parareal_core::parareal::{parareal_solve, PararealConfig, PararealResult};
use parareal_core::problems::Benchmark;
use parareal_core::rpnn::derive_seed;
use parareal_core::{with_workers, State};
use serde::Serialize;

use crate::artifacts::{self, ScaledColumn};
use crate::compare::{compare_with_serial, Comparison};
use crate::config::ExperimentConfig;
use crate::timing::TimingStats;
use crate::RunError;

/// Everything produced by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Result of the first repeat; all artifacts describe this run.
    pub result: PararealResult,
    pub serial: Vec<State>,
    pub comparison: Comparison,
    pub certificates: Option<Vec<Certificate>>,
    pub timings: TimingReport,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingReport {
    pub repeats: usize,
    pub workers: usize,
    /// Mean cost of one coarse step (training included) in the zeroth sweep,
    /// averaged over repeats.
    pub zeroth_step_mean: f64,
    /// Wall clock of whole solves.
    pub total: TimingStats,
    pub zeroth_sweep_mean: f64,
    pub fine_sweeps_mean: f64,
    pub coarse_sweeps_mean: f64,
    pub serial_reference: f64,
}

#[derive(Serialize)]
struct BasisInfo {
    first_interval: usize,
    step: f64,
    seed: Option<u64>,
    condition: f64,
    resamples: usize,
    /// False when a collocation node sits on an interval endpoint, which the
    /// step-size convergence condition excludes.
    nodes_interior: bool,
    a: Vec<f64>,
    b: Vec<f64>,
    nodes: Vec<f64>,
}

#[derive(Serialize)]
struct IntervalNetwork<'a> {
    basis: usize,
    x0: &'a [f64],
    /// Outer weights, `H x d` in column-major order.
    theta: &'a [f64],
}

#[derive(Serialize)]
struct Meta<'a> {
    config: &'a ExperimentConfig,
    system: &'a str,
    dimension: usize,
    intervals: usize,
    seeds: &'a [u64],
    converged: Option<bool>,
    iterations: Option<usize>,
    error_history: Option<&'a [f64]>,
    error: Option<String>,
    comparison: Option<ComparisonSummary<'a>>,
    bases: Vec<BasisInfo>,
    networks: Vec<IntervalNetwork<'a>>,
    reports: Option<&'a [Vec<TrainReport>]>,
    certificates: Option<&'a [Certificate]>,
}

#[derive(Serialize)]
struct ComparisonSummary<'a> {
    max_euclidean: f64,
    max_abs: f64,
    component_relative: &'a [f64],
}

/// Seed of repeat `r`: the configured seed first, then derived ones unless
/// pinned.
pub fn repeat_seed(config: &ExperimentConfig, repeat: usize) -> u64 {
    if repeat == 0 || config.pin_seed {
        config.rpnn.seed
    } else {
        derive_seed(config.rpnn.seed, repeat as u64)
    }
}

fn scaled_columns(benchmark: Benchmark) -> Vec<ScaledColumn> {
    match benchmark {
        Benchmark::Rober => vec![ScaledColumn {
            name: "x2_scaled".into(),
            component: 1,
            factor: 1e4,
        }],
        _ => Vec::new(),
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Solves the configured problem `repeats` times, runs the serial reference
/// once and writes all artifacts to `config.out`.
///
/// A run that hits `max_it` is still returned (check `result.converged`); a
/// solver failure writes `meta.json` with the error before returning it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome, RunError> {
    config.validate()?;
    let system = config.system()?;
    let mesh = config.mesh()?;
    let x0 = config.initial_state(&system)?;
    fs::create_dir_all(&config.out).map_err(io_error(&config.out))?;
    let out = |name: &str| config.out.join(name);

    let solver = PararealConfig {
        tol: config.tol,
        max_it: config.max_it,
        fine: config.fine,
        rpnn: config.rpnn,
        lm: config.lm,
        sweep: config.sweep,
        record_trace: config.trace,
    };
    let seeds: Vec<u64> = (0..config.repeats).map(|r| repeat_seed(config, r)).collect();

    let mut runs: Vec<PararealResult> = Vec::with_capacity(config.repeats);
    let mut wall = Vec::with_capacity(config.repeats);
    let mut failure = None;
    for &seed in &seeds {
        let mut solver = solver.clone();
        solver.rpnn.seed = seed;
        let started = std::time::Instant::now();
        match with_workers(config.workers, || parareal_solve(&system, &x0, &mesh, &solver)) {
            Ok(Ok(result)) => {
                wall.push(started.elapsed().as_secs_f64());
                runs.push(result);
            }
            Ok(Err(e)) | Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    if let Some(e) = failure {
        let meta = Meta {
            config,
            system: system.name(),
            dimension: system.dim(),
            intervals: mesh.intervals(),
            seeds: &seeds,
            converged: None,
            iterations: None,
            error_history: None,
            error: Some(e.to_string()),
            comparison: None,
            bases: Vec::new(),
            networks: Vec::new(),
            reports: None,
            certificates: None,
        };
        artifacts::write_json(&out("meta.json"), &meta).map_err(io_error(&out("meta.json")))?;
        return Err(RunError::Solver(e));
    }

    let serial_started = std::time::Instant::now();
    let serial = with_workers(config.workers, || serial_solve(&system, &x0, &mesh, &config.fine))??;
    let serial_reference = serial_started.elapsed().as_secs_f64();

    let result = runs.swap_remove(0);
    let all = std::iter::once(&result).chain(runs.iter());
    let mean = |f: &dyn Fn(&PararealResult) -> f64| all.clone().map(f).sum::<f64>() / config.repeats as f64;
    let timings = TimingReport {
        repeats: config.repeats,
        workers: config.workers,
        zeroth_step_mean: mean(&|r| r.timings.mean_zeroth_step()),
        total: TimingStats::from_samples(&wall),
        zeroth_sweep_mean: mean(&|r| r.timings.zeroth_sweep),
        fine_sweeps_mean: mean(&|r| r.timings.fine_sweeps),
        coarse_sweeps_mean: mean(&|r| r.timings.coarse_sweeps),
        serial_reference,
    };

    let comparison = compare_with_serial(&result.nodes, &serial)?;
    let certificates = if config.certify {
        Some(with_workers(config.workers, || {
            certify_result(&system, &result, &config.fine)
        })??)
    } else {
        None
    };

    let names = system.component_names();
    let scaled = scaled_columns(config.benchmark);
    let times = mesh.nodes();
    let write = |name: &str, res: std::io::Result<()>| res.map_err(io_error(&out(name)));
    write(
        "nodes.csv",
        artifacts::write_states(&out("nodes.csv"), &names, &scaled, times, &result.nodes),
    )?;
    write(
        "reference.csv",
        artifacts::write_states(&out("reference.csv"), &names, &scaled, times, &serial),
    )?;

    let samples = config.dense_samples;
    let dense_times: Vec<f64> = (0..samples)
        .map(|k| {
            if k == samples - 1 {
                mesh.end()
            } else {
                mesh.start() + (mesh.end() - mesh.start()) * k as f64 / (samples - 1) as f64
            }
        })
        .collect();
    let dense = dense_times
        .iter()
        .map(|&t| result.evaluate(t))
        .collect::<Result<Vec<_>, _>>()?;
    write(
        "dense.csv",
        artifacts::write_states(&out("dense.csv"), &names, &scaled, &dense_times, &dense),
    )?;
    write(
        "errors.csv",
        artifacts::write_errors(&out("errors.csv"), &result.error_history),
    )?;
    write(
        "compare.csv",
        artifacts::write_comparison(&out("compare.csv"), times, &comparison),
    )?;
    if let Some(trace) = &result.trace {
        write(
            "trace.csv",
            artifacts::write_trace(&out("trace.csv"), &names, times, trace),
        )?;
    }
    write("timings.json", artifacts::write_json(&out("timings.json"), &timings))?;

    let mut bases: Vec<BasisInfo> = Vec::new();
    let mut basis_index = Vec::with_capacity(result.bases.len());
    for (n, basis) in result.bases.iter().enumerate() {
        let found = (0..n).find(|&m| std::sync::Arc::ptr_eq(&result.bases[m], basis));
        match found {
            Some(m) => basis_index.push(basis_index[m]),
            None => {
                basis_index.push(bases.len());
                bases.push(BasisInfo {
                    first_interval: n,
                    step: basis.step(),
                    seed: basis.seed(),
                    condition: basis.condition(),
                    resamples: basis.resamples(),
                    nodes_interior: basis.nodes_interior(),
                    a: basis.a().as_slice().to_vec(),
                    b: basis.b().as_slice().to_vec(),
                    nodes: basis.nodes().to_vec(),
                });
            }
        }
    }
    let networks = result
        .weights
        .iter()
        .enumerate()
        .map(|(n, theta)| IntervalNetwork {
            basis: basis_index[n],
            x0: result.nodes[n].as_slice(),
            theta: theta.as_slice(),
        })
        .collect();
    let meta = Meta {
        config,
        system: system.name(),
        dimension: system.dim(),
        intervals: mesh.intervals(),
        seeds: &seeds,
        converged: Some(result.converged),
        iterations: Some(result.iterations),
        error_history: Some(&result.error_history),
        error: None,
        comparison: Some(ComparisonSummary {
            max_euclidean: comparison.max_euclidean,
            max_abs: comparison.max_abs,
            component_relative: &comparison.component_relative,
        }),
        bases,
        networks,
        reports: Some(&result.reports),
        certificates: certificates.as_deref(),
    };
    write("meta.json", artifacts::write_json(&out("meta.json"), &meta))?;

    Ok(RunOutcome {
        result,
        serial,
        comparison,
        certificates,
        timings,
        seeds,
    })
}
