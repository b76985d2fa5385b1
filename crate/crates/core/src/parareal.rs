//! The hybrid Parareal driver.
//!
//! Iterate `i` is built from iterate `i - 1` as
//!
//! ```text
//! x_{n+1}^i = F(x_n^{i-1}) + N_n^i(dt_n) - N_n^{i-1}(dt_n)
//! ```
//!
//! where `F` is the fine propagator (run for all `n` at once) and `N_n^i` the
//! network retrained at `x_n^i` during the sequential coarse sweep.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::collocation::{train_coarse, LmOptions, TrainReport};
use crate::integrators::FineMethod;
use crate::problems::OdeSystem;
use crate::rpnn::{derive_seed, BasisOptions, RpnnBasis, WeightMatrix};
use crate::sweep::fine_sweep;
use crate::{all_finite, Error, Result, State, SweepMode, TimeMesh};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PararealConfig {
    pub tol: f64,
    pub max_it: usize,
    pub fine: FineMethod,
    pub rpnn: BasisOptions,
    pub lm: LmOptions,
    pub sweep: SweepMode,
    pub record_trace: bool,
}

impl PararealConfig {
    pub fn new(fine: FineMethod) -> Self {
        PararealConfig {
            tol: 1e-4,
            max_it: 20,
            fine,
            rpnn: BasisOptions::default(),
            lm: LmOptions::default(),
            sweep: SweepMode::default(),
            record_trace: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_it == 0 {
            return Err(Error::InvalidArgument("max_it must be at least 1".into()));
        }
        self.fine.validate()?;
        self.rpnn.validate()?;
        self.lm.validate()
    }
}

/// Wall-clock seconds per phase of one solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub zeroth_sweep: f64,
    /// Training time of each interval in the zeroth sweep.
    pub zeroth_training: Vec<f64>,
    pub fine_sweeps: f64,
    pub coarse_sweeps: f64,
    pub total: f64,
}

impl PhaseTimings {
    /// Mean cost of one coarse step (training plus evaluation) in the zeroth
    /// sweep.
    pub fn mean_zeroth_step(&self) -> f64 {
        if self.zeroth_training.is_empty() {
            0.0
        } else {
            self.zeroth_training.iter().sum::<f64>() / self.zeroth_training.len() as f64
        }
    }
}

/// Output of the zeroth (purely coarse) sweep.
#[derive(Debug, Clone)]
pub struct ZerothIterate {
    pub nodes: Vec<State>,
    pub weights: Vec<WeightMatrix>,
    /// Network end values `N_n(dt_n)`, indexed by the node they predict
    /// (entry 0 is unused and holds `x0`).
    pub coarse: Vec<State>,
    pub bases: Vec<Arc<RpnnBasis>>,
    pub reports: Vec<TrainReport>,
    pub training_times: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PararealResult {
    pub mesh: TimeMesh,
    /// Node states of the final iterate.
    pub nodes: Vec<State>,
    pub bases: Vec<Arc<RpnnBasis>>,
    /// Weights of the final iterate, trained at `nodes[n]`.
    pub weights: Vec<WeightMatrix>,
    /// Number of Parareal iterations after the zeroth sweep.
    pub iterations: usize,
    pub converged: bool,
    /// Stopping error of each iteration.
    pub error_history: Vec<f64>,
    pub timings: PhaseTimings,
    /// `reports[i][n]`: training of interval `n` in iteration `i` (0 is the
    /// zeroth sweep).
    pub reports: Vec<Vec<TrainReport>>,
    /// Node states of every iterate, when requested.
    pub trace: Option<Vec<Vec<State>>>,
}

impl PararealResult {
    /// Piecewise network approximation at time `t`.
    pub fn evaluate(&self, t: f64) -> Result<State> {
        let n = self.mesh.locate(t).ok_or(Error::OutOfRange {
            t,
            start: self.mesh.start(),
            end: self.mesh.end(),
        })?;
        if t == self.mesh.end() {
            return Ok(self.nodes[self.mesh.intervals()].clone());
        }
        let local = t - self.mesh.nodes()[n];
        self.bases[n].eval(&self.weights[n], &self.nodes[n], local)
    }
}

pub fn evaluate_piecewise(result: &PararealResult, t: f64) -> Result<State> {
    result.evaluate(t)
}

/// `xf + (xs_new - xs_prev)`; returns `xf` exactly when the coarse values agree.
pub fn correction_step(xf: &State, xs_new: &State, xs_prev: &State) -> Result<State> {
    if xs_new.len() != xf.len() {
        return Err(Error::shape("coarse value", xf.len(), xs_new.len()));
    }
    if xs_prev.len() != xf.len() {
        return Err(Error::shape("previous coarse value", xf.len(), xs_prev.len()));
    }
    Ok(xf + (xs_new - xs_prev))
}

/// Largest Euclidean difference between two iterates over nodes `1..`.
pub fn stopping_error(current: &[State], previous: &[State]) -> Result<f64> {
    if current.len() != previous.len() {
        return Err(Error::shape("node count", previous.len(), current.len()));
    }
    let mut err: f64 = 0.0;
    for (a, b) in current.iter().zip(previous).skip(1) {
        if a.len() != b.len() {
            return Err(Error::shape("node state", b.len(), a.len()));
        }
        err = err.max((a - b).norm());
    }
    Ok(err)
}

/// One basis per distinct interval length. The seed for a length comes from
/// the first interval that has it.
fn build_bases(mesh: &TimeMesh, opts: &BasisOptions) -> Result<Vec<Arc<RpnnBasis>>> {
    let mut by_length: HashMap<u64, Arc<RpnnBasis>> = HashMap::new();
    let mut bases = Vec::with_capacity(mesh.intervals());
    for (n, &dt) in mesh.steps().iter().enumerate() {
        let basis = match by_length.get(&dt.to_bits()) {
            Some(b) => b.clone(),
            None => {
                let seeded = BasisOptions {
                    seed: derive_seed(opts.seed, n as u64),
                    ..*opts
                };
                let b = Arc::new(RpnnBasis::sample(&seeded, dt).map_err(|e| Error::Training {
                    iteration: 0,
                    interval: n,
                    source: Box::new(e),
                })?);
                by_length.insert(dt.to_bits(), b.clone());
                b
            }
        };
        bases.push(basis);
    }
    Ok(bases)
}

fn check_inputs(system: &OdeSystem, x0: &State, config: &PararealConfig) -> Result<()> {
    config.validate()?;
    if x0.len() != system.dim() {
        return Err(Error::shape("initial state", system.dim(), x0.len()));
    }
    if !all_finite(x0.as_slice()) {
        return Err(Error::NonFinite("initial state"));
    }
    Ok(())
}

fn coarse_step(
    system: &OdeSystem,
    basis: &RpnnBasis,
    x: &State,
    warm: &WeightMatrix,
    lm: &LmOptions,
    iteration: usize,
    interval: usize,
) -> Result<(WeightMatrix, State, TrainReport)> {
    let tag = |e: Error| Error::Training {
        iteration,
        interval,
        source: Box::new(e),
    };
    let (theta, report) = train_coarse(basis, x, system, warm, lm).map_err(tag)?;
    let end = basis.eval(&theta, x, basis.step()).map_err(tag)?;
    if !all_finite(end.as_slice()) {
        return Err(tag(Error::NonFinite("coarse prediction")));
    }
    Ok((theta, end, report))
}

/// The zeroth sweep: train on each interval in turn and chain the network
/// end values.
pub fn zeroth_iterate(
    system: &OdeSystem,
    x0: &State,
    mesh: &TimeMesh,
    config: &PararealConfig,
) -> Result<ZerothIterate> {
    check_inputs(system, x0, config)?;
    let bases = build_bases(mesh, &config.rpnn)?;
    zeroth_with_bases(system, x0, bases, config)
}

fn zeroth_with_bases(
    system: &OdeSystem,
    x0: &State,
    bases: Vec<Arc<RpnnBasis>>,
    config: &PararealConfig,
) -> Result<ZerothIterate> {
    let n_int = bases.len();
    let d = system.dim();
    let mut nodes = Vec::with_capacity(n_int + 1);
    nodes.push(x0.clone());
    let mut coarse = nodes.clone();
    let mut weights: Vec<WeightMatrix> = Vec::with_capacity(n_int);
    let mut reports = Vec::with_capacity(n_int);
    let mut training_times = Vec::with_capacity(n_int);
    for n in 0..n_int {
        // Weights only carry over between intervals that share a basis.
        let warm = match weights.last() {
            Some(w) if Arc::ptr_eq(&bases[n - 1], &bases[n]) => w.clone(),
            _ => DMatrix::zeros(bases[n].hidden(), d),
        };
        let started = Instant::now();
        let (theta, end, report) = coarse_step(system, &bases[n], &nodes[n], &warm, &config.lm, 0, n)?;
        training_times.push(started.elapsed().as_secs_f64());
        weights.push(theta);
        nodes.push(end.clone());
        coarse.push(end);
        reports.push(report);
    }
    Ok(ZerothIterate {
        nodes,
        weights,
        coarse,
        bases,
        reports,
        training_times,
    })
}

/// Runs the hybrid Parareal iteration until the stopping error drops to
/// `config.tol` or `config.max_it` iterations have been made.
///
/// Interval `n` is retrained only when its initial state changed since the
/// previous iterate; otherwise the previous weights and coarse value are
/// reused, which yields exactly the previous prediction.
pub fn parareal_solve(
    system: &OdeSystem,
    x0: &State,
    mesh: &TimeMesh,
    config: &PararealConfig,
) -> Result<PararealResult> {
    check_inputs(system, x0, config)?;
    for (n, &dt) in mesh.steps().iter().enumerate() {
        config.fine.steps_for(dt).map_err(|e| Error::Interval {
            index: n,
            source: Box::new(e),
        })?;
    }
    let started = Instant::now();
    let mut timings = PhaseTimings::default();

    let bases = build_bases(mesh, &config.rpnn)?;
    let zeroth = zeroth_with_bases(system, x0, bases, config)?;
    timings.zeroth_sweep = started.elapsed().as_secs_f64();
    timings.zeroth_training = zeroth.training_times;

    let ZerothIterate {
        nodes: mut prev,
        mut weights,
        coarse: mut cache,
        bases,
        reports: zeroth_reports,
        ..
    } = zeroth;
    let n_int = mesh.intervals();
    let mut reports = vec![zeroth_reports];
    let mut trace = config.record_trace.then(|| vec![prev.clone()]);
    let mut error_history = Vec::new();
    let mut error = f64::INFINITY;
    let mut iteration = 0;

    while iteration < config.max_it && error > config.tol {
        iteration += 1;

        let fine_started = Instant::now();
        let fine =
            fine_sweep(system, &prev[..n_int], mesh.steps(), &config.fine, config.sweep).map_err(|(interval, e)| {
                Error::FineStep {
                    iteration,
                    interval,
                    source: Box::new(e),
                }
            })?;
        timings.fine_sweeps += fine_started.elapsed().as_secs_f64();

        let coarse_started = Instant::now();
        let mut next = Vec::with_capacity(n_int + 1);
        next.push(x0.clone());
        let mut iter_reports = Vec::with_capacity(n_int);
        error = 0.0;
        for n in 0..n_int {
            let last = &reports[iteration - 1][n];
            let (xs, report) = if next[n] == prev[n] {
                (cache[n + 1].clone(), last.reused())
            } else {
                let (theta, end, report) =
                    coarse_step(system, &bases[n], &next[n], &weights[n], &config.lm, iteration, n)?;
                weights[n] = theta;
                (end, report)
            };
            let corrected = correction_step(&fine[n], &xs, &cache[n + 1])?;
            if !all_finite(corrected.as_slice()) {
                return Err(Error::Training {
                    iteration,
                    interval: n,
                    source: Box::new(Error::NonFinite("corrected node state")),
                });
            }
            error = error.max((&corrected - &prev[n + 1]).norm());
            cache[n + 1] = xs;
            next.push(corrected);
            iter_reports.push(report);
        }
        timings.coarse_sweeps += coarse_started.elapsed().as_secs_f64();

        log::debug!("iteration {iteration}: stopping error {error:e}");
        error_history.push(error);
        reports.push(iter_reports);
        if let Some(t) = trace.as_mut() {
            t.push(next.clone());
        }
        prev = next;
    }
    timings.total = started.elapsed().as_secs_f64();

    Ok(PararealResult {
        mesh: mesh.clone(),
        nodes: prev,
        bases,
        weights,
        iterations: iteration,
        converged: error <= config.tol,
        error_history,
        timings,
        reports,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn v(xs: &[f64]) -> State {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn correction_arithmetic() {
        assert_eq!(correction_step(&v(&[1.0]), &v(&[2.0]), &v(&[3.0])).unwrap(), v(&[0.0]));
        assert_eq!(
            correction_step(&v(&[1.0, 0.0]), &v(&[0.0, 1.0]), &v(&[1.0, 1.0])).unwrap(),
            v(&[0.0, 0.0])
        );
        let xf = v(&[0.1, 0.7]);
        let xs = v(&[1e8 / 3.0, -2.2]);
        assert_eq!(correction_step(&xf, &xs, &xs).unwrap(), xf);
        assert!(correction_step(&xf, &v(&[1.0]), &xs).is_err());
    }

    #[test]
    fn stopping_error_cases() {
        let a = vec![v(&[0.0, 0.0]), v(&[1.0, 1.0]), v(&[2.0, 2.0])];
        assert_eq!(stopping_error(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b[2] = v(&[5.0, 6.0]);
        assert_eq!(stopping_error(&b, &a).unwrap(), 5.0);
        b[1] = v(&[1.0, 2.0]);
        assert_eq!(stopping_error(&b, &a).unwrap(), 5.0);
        // node 0 never counts
        b[0] = v(&[100.0, 0.0]);
        assert_eq!(stopping_error(&b, &a).unwrap(), 5.0);
        assert!(stopping_error(&a[..2], &a).is_err());
    }

    #[test]
    fn zero_field_stays_put() {
        let sys = OdeSystem::constant(DVector::zeros(2));
        let x0 = v(&[0.3, -0.4]);
        let mesh = TimeMesh::uniform(0.0, 1.0, 4).unwrap();
        let config = PararealConfig::new(FineMethod::rk4(0.05));
        let zeroth = zeroth_iterate(&sys, &x0, &mesh, &config).unwrap();
        assert!(zeroth.nodes.iter().all(|x| *x == x0));
        assert!(zeroth.weights.iter().all(|w| w.iter().all(|&v| v == 0.0)));
        for (n, node) in zeroth.nodes.iter().enumerate().skip(1) {
            assert_eq!(*node, zeroth.coarse[n]);
        }
        let result = parareal_solve(&sys, &x0, &mesh, &config).unwrap();
        assert!(result.converged);
        for t in [0.0, 0.1, 0.5, 0.99, 1.0] {
            assert_eq!(result.evaluate(t).unwrap(), x0);
        }
    }

    #[test]
    fn single_interval_is_fine_after_one_iteration() {
        let sys = crate::problems::make_benchmark("sir", &[]).unwrap();
        let x0 = v(&[0.3, 0.5, 0.2]);
        let mesh = TimeMesh::uniform(0.0, 2.0, 1).unwrap();
        let config = PararealConfig {
            tol: 1e-300,
            ..PararealConfig::new(FineMethod::rk4(1e-2))
        };
        let result = parareal_solve(&sys, &x0, &mesh, &config).unwrap();
        let fine = crate::integrators::fine_propagate(&sys, &x0, 2.0, &config.fine).unwrap();
        assert_eq!(result.iterations, 2);
        assert_eq!(result.nodes[1], fine);
        assert_eq!(result.error_history[1], 0.0);
    }

    #[test]
    fn bases_shared_by_length() {
        let mesh = TimeMesh::from_blocks(0.0, &[(3, 0.5), (2, 1.0)]).unwrap();
        let bases = build_bases(&mesh, &BasisOptions::default()).unwrap();
        assert!(Arc::ptr_eq(&bases[0], &bases[2]));
        assert!(Arc::ptr_eq(&bases[3], &bases[4]));
        assert!(!Arc::ptr_eq(&bases[0], &bases[3]));
    }

    #[test]
    fn out_of_range_evaluation() {
        let sys = OdeSystem::scalar_linear(-1.0);
        let mesh = TimeMesh::uniform(0.0, 1.0, 2).unwrap();
        let result = parareal_solve(&sys, &v(&[1.0]), &mesh, &PararealConfig::new(FineMethod::rk4(0.01))).unwrap();
        assert!(matches!(result.evaluate(1.5), Err(Error::OutOfRange { .. })));
        assert_eq!(result.evaluate(0.5).unwrap(), result.nodes[1]);
    }

    #[test]
    fn bad_fine_step_is_reported() {
        let sys = OdeSystem::scalar_linear(-1.0);
        let mesh = TimeMesh::uniform(0.0, 1.0, 2).unwrap();
        let err = parareal_solve(&sys, &v(&[1.0]), &mesh, &PararealConfig::new(FineMethod::rk4(0.3))).unwrap_err();
        assert!(matches!(err.root(), Error::StepCount { .. }));
    }
}
