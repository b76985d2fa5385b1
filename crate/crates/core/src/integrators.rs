//! Fine one-step integrators and their composition over a sub-interval.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::problems::OdeSystem;
use crate::{all_finite, Error, Result, State, TimeMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FineKind {
    Rk4,
    ImplicitEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-12,
            max_iter: 50,
        }
    }
}

/// A fine one-step method with its step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FineMethod {
    pub kind: FineKind,
    pub step: f64,
    #[serde(default)]
    pub newton: NewtonOptions,
}

impl FineMethod {
    pub fn rk4(step: f64) -> Self {
        FineMethod {
            kind: FineKind::Rk4,
            step,
            newton: NewtonOptions::default(),
        }
    }

    pub fn implicit_euler(step: f64) -> Self {
        FineMethod {
            kind: FineKind::ImplicitEuler,
            step,
            newton: NewtonOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "fine step must be positive, got {}",
                self.step
            )));
        }
        if !(self.newton.tol > 0.0) || self.newton.max_iter == 0 {
            return Err(Error::InvalidArgument(
                "Newton tolerance and iteration cap must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Number of fine steps covering `length`, if it is an integer multiple of
    /// the step up to float division artifacts.
    pub fn steps_for(&self, length: f64) -> Result<usize> {
        let quotient = length / self.step;
        let count = quotient.round();
        let slack = 4.0 * f64::EPSILON * quotient.abs();
        if !(quotient.is_finite() && count >= 1.0 && (quotient - count).abs() <= slack) {
            return Err(Error::StepCount {
                length,
                step: self.step,
            });
        }
        Ok(count as usize)
    }
}

/// Reusable buffers for repeated steps on one system.
struct Stepper<'a> {
    system: &'a OdeSystem,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    jac: DMatrix<f64>,
}

impl<'a> Stepper<'a> {
    fn new(system: &'a OdeSystem) -> Self {
        let d = system.dim();
        Stepper {
            system,
            k: std::array::from_fn(|_| vec![0.0; d]),
            tmp: vec![0.0; d],
            jac: DMatrix::zeros(d, d),
        }
    }

    fn rk4(&mut self, x: &mut [f64], h: f64) -> Result<()> {
        let sys = self.system;
        let [k1, k2, k3, k4] = &mut self.k;
        let tmp = &mut self.tmp;

        sys.eval_into(x, k1);
        check_stage(k1, 1)?;
        for i in 0..x.len() {
            tmp[i] = x[i] + h * k1[i] / 2.0;
        }
        sys.eval_into(tmp, k2);
        check_stage(k2, 2)?;
        for i in 0..x.len() {
            tmp[i] = x[i] + h * k2[i] / 2.0;
        }
        sys.eval_into(tmp, k3);
        check_stage(k3, 3)?;
        for i in 0..x.len() {
            tmp[i] = x[i] + h * k3[i];
        }
        sys.eval_into(tmp, k4);
        check_stage(k4, 4)?;
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !all_finite(x) {
            return Err(Error::StepFailure { stage: 5 });
        }
        Ok(())
    }

    /// Solves `y - x - h F(y) = 0` by plain Newton from `y = x`; `x` is
    /// overwritten with the solution.
    fn implicit_euler(&mut self, x: &mut [f64], h: f64, opts: &NewtonOptions) -> Result<()> {
        let sys = self.system;
        let d = x.len();
        let [start, fy, residual, _] = &mut self.k;
        start.copy_from_slice(x);
        let threshold = opts.tol * (1.0 + norm(start));

        let mut res_norm = f64::INFINITY;
        for iter in 0..=opts.max_iter {
            sys.eval_into(x, fy);
            for i in 0..d {
                residual[i] = x[i] - start[i] - h * fy[i];
            }
            res_norm = norm(residual);
            if !res_norm.is_finite() {
                break;
            }
            if res_norm <= threshold {
                return Ok(());
            }
            if iter == opts.max_iter {
                break;
            }
            sys.jacobian_into(x, &mut self.jac);
            let mut newton = DMatrix::identity(d, d);
            newton.zip_apply(&self.jac, |n, j| *n -= h * j);
            let mut delta = DVector::from_iterator(d, residual.iter().map(|r| -r));
            if !newton.lu().solve_mut(&mut delta) {
                return Err(Error::Singular("implicit Euler Newton matrix"));
            }
            for i in 0..d {
                x[i] += delta[i];
            }
        }
        Err(Error::NewtonNonConvergence {
            iterations: opts.max_iter,
            residual: res_norm,
        })
    }
}

fn check_stage(k: &[f64], stage: usize) -> Result<()> {
    if all_finite(k) {
        Ok(())
    } else {
        Err(Error::StepFailure { stage })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_input(system: &OdeSystem, x: &State, h: f64) -> Result<()> {
    if x.len() != system.dim() {
        return Err(Error::shape("state", system.dim(), x.len()));
    }
    if !all_finite(x.as_slice()) {
        return Err(Error::NonFinite("state"));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    Ok(())
}

/// One classical fourth-order Runge–Kutta step.
pub fn rk4_step(system: &OdeSystem, x: &State, h: f64) -> Result<State> {
    check_input(system, x, h)?;
    let mut y = x.clone();
    Stepper::new(system).rk4(y.as_mut_slice(), h)?;
    Ok(y)
}

/// One implicit Euler step solved by Newton with the analytic Jacobian.
pub fn implicit_euler_step(system: &OdeSystem, x: &State, h: f64, newton: &NewtonOptions) -> Result<State> {
    check_input(system, x, h)?;
    let mut y = x.clone();
    Stepper::new(system).implicit_euler(y.as_mut_slice(), h, newton)?;
    Ok(y)
}

/// The fine propagator: `length / method.step` composed steps.
pub fn fine_propagate(system: &OdeSystem, x: &State, length: f64, method: &FineMethod) -> Result<State> {
    method.validate()?;
    check_input(system, x, length)?;
    let count = method.steps_for(length)?;
    let mut y = x.clone();
    let mut stepper = Stepper::new(system);
    let h = method.step;
    for _ in 0..count {
        match method.kind {
            FineKind::Rk4 => stepper.rk4(y.as_mut_slice(), h)?,
            FineKind::ImplicitEuler => stepper.implicit_euler(y.as_mut_slice(), h, &method.newton)?,
        }
    }
    Ok(y)
}

/// Like [`fine_propagate`] but returns every intermediate fine state,
/// starting with `x`.
pub fn fine_trajectory(system: &OdeSystem, x: &State, length: f64, method: &FineMethod) -> Result<Vec<State>> {
    method.validate()?;
    check_input(system, x, length)?;
    let count = method.steps_for(length)?;
    let mut states = Vec::with_capacity(count + 1);
    states.push(x.clone());
    let mut y = x.clone();
    let mut stepper = Stepper::new(system);
    for _ in 0..count {
        match method.kind {
            FineKind::Rk4 => stepper.rk4(y.as_mut_slice(), method.step)?,
            FineKind::ImplicitEuler => stepper.implicit_euler(y.as_mut_slice(), method.step, &method.newton)?,
        }
        states.push(y.clone());
    }
    Ok(states)
}

/// Sequential fine integration over the whole mesh; returns the state at
/// every node.
pub fn serial_solve(system: &OdeSystem, x0: &State, mesh: &TimeMesh, method: &FineMethod) -> Result<Vec<State>> {
    let mut states = Vec::with_capacity(mesh.intervals() + 1);
    states.push(x0.clone());
    for (n, &length) in mesh.steps().iter().enumerate() {
        let next = fine_propagate(system, &states[n], length, method).map_err(|e| Error::Interval {
            index: n,
            source: Box::new(e),
        })?;
        states.push(next);
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::make_benchmark;
    use approx::assert_abs_diff_eq;

    fn scalar(x: f64) -> State {
        DVector::from_element(1, x)
    }

    #[test]
    fn rk4_matches_taylor_polynomial() {
        let sys = OdeSystem::scalar_linear(1.0);
        let y = rk4_step(&sys, &scalar(1.0), 0.1).unwrap();
        let h: f64 = 0.1;
        let taylor = 1.0 + h + h * h / 2.0 + h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert_abs_diff_eq!(y[0], taylor, epsilon = 1e-15);
        assert_abs_diff_eq!(y[0], 1.1051708333333333, epsilon = 1e-15);
    }

    #[test]
    fn zero_field_leaves_state_unchanged() {
        let sys = OdeSystem::constant(DVector::zeros(2));
        let x = DVector::from_vec(vec![0.7, -3.0]);
        assert_eq!(rk4_step(&sys, &x, 0.37).unwrap(), x);
        assert_eq!(
            implicit_euler_step(&sys, &x, 0.37, &NewtonOptions::default()).unwrap(),
            x
        );
    }

    #[test]
    fn implicit_euler_scalar_decay() {
        let sys = OdeSystem::scalar_linear(-1.0);
        let y = implicit_euler_step(&sys, &scalar(1.0), 0.1, &NewtonOptions::default()).unwrap();
        assert_abs_diff_eq!(y[0], 1.0 / 1.1, epsilon = 1e-15);
        assert_abs_diff_eq!(y[0], 0.9090909090909091, epsilon = 1e-15);
    }

    #[test]
    fn implicit_euler_rober_residual() {
        let sys = make_benchmark("rober", &[]).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let h = 1e-4;
        let y = implicit_euler_step(&sys, &x, h, &NewtonOptions::default()).unwrap();
        let r = &y - &x - h * sys.eval_field(&y).unwrap();
        assert!(r.norm() <= 1e-12, "residual {}", r.norm());
    }

    #[test]
    fn implicit_euler_is_stable_for_stiff_decay() {
        for lambda in [-1.0, -1e3, -1e6] {
            let sys = OdeSystem::scalar_linear(lambda);
            for h in [1e-3, 0.1, 1.0, 100.0] {
                let y = implicit_euler_step(&sys, &scalar(1.0), h, &NewtonOptions::default()).unwrap();
                assert!(y[0].abs() < 1.0);
                assert_abs_diff_eq!(y[0], 1.0 / (1.0 - h * lambda), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn newton_failure_is_reported() {
        let sys = make_benchmark("rober", &[]).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let opts = NewtonOptions {
            tol: 1e-30,
            max_iter: 2,
        };
        let err = implicit_euler_step(&sys, &x, 1e-2, &opts).unwrap_err();
        assert!(matches!(err, Error::NewtonNonConvergence { iterations: 2, .. }));
    }

    #[test]
    fn rk4_overflow_names_stage() {
        let sys = OdeSystem::scalar_linear(1e300);
        let err = rk4_step(&sys, &scalar(1e10), 1.0).unwrap_err();
        assert!(matches!(err, Error::StepFailure { stage: 1 }));
    }

    #[test]
    fn single_step_composition() {
        let sys = make_benchmark("lorenz", &[]).unwrap();
        let x = DVector::from_vec(vec![20.0, 5.0, -5.0]);
        let m = FineMethod::rk4(1e-3);
        assert_eq!(
            fine_propagate(&sys, &x, 1e-3, &m).unwrap(),
            rk4_step(&sys, &x, 1e-3).unwrap()
        );
    }

    #[test]
    fn exponential_decay_over_unit_time() {
        let sys = OdeSystem::scalar_linear(-1.0);
        let y = fine_propagate(&sys, &scalar(1.0), 1.0, &FineMethod::rk4(0.01)).unwrap();
        assert_abs_diff_eq!(y[0], (-1.0f64).exp(), epsilon = 1e-9);
    }

    #[test]
    fn step_count_validation() {
        let m = FineMethod::rk4(0.3);
        assert!(matches!(m.steps_for(1.0), Err(Error::StepCount { .. })));
        assert!(m.steps_for(0.1).is_err());
        assert_eq!(FineMethod::rk4(10.0 / 14500.0).steps_for(0.04).unwrap(), 58);
        assert_eq!(FineMethod::rk4(17.0 / 80000.0).steps_for(17.0 / 125.0).unwrap(), 640);
        assert_eq!(FineMethod::implicit_euler(1e-4).steps_for(3.0).unwrap(), 30000);
    }

    #[test]
    fn sir_sum_is_conserved() {
        let sys = make_benchmark("sir", &[]).unwrap();
        let x = DVector::from_vec(vec![0.3, 0.5, 0.2]);
        let y = fine_propagate(&sys, &x, 1.0, &FineMethod::rk4(1e-2)).unwrap();
        assert!((y.sum() - x.sum()).abs() <= 1e-13);
    }

    #[test]
    fn rk4_observed_order_is_four() {
        let sys = OdeSystem::scalar_linear(-1.0);
        let exact = (-1.0f64).exp();
        let errs: Vec<f64> = [0.1, 0.05, 0.025, 0.0125]
            .iter()
            .map(|&h| (fine_propagate(&sys, &scalar(1.0), 1.0, &FineMethod::rk4(h)).unwrap()[0] - exact).abs())
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((3.7..=4.3).contains(&order), "observed order {order}");
        }
    }

    #[test]
    fn rk4_step_halving_on_lorenz() {
        // Local error of RK4 is O(h^5): the one-step vs two-half-steps gap
        // shrinks by ~32 per halving, comfortably above the ~16 floor.
        let sys = make_benchmark("lorenz", &[]).unwrap();
        let x = DVector::from_vec(vec![20.0, 5.0, -5.0]);
        let gap = |h: f64| {
            let one = rk4_step(&sys, &x, h).unwrap();
            let two = rk4_step(&sys, &rk4_step(&sys, &x, h / 2.0).unwrap(), h / 2.0).unwrap();
            (one - two).norm()
        };
        let ratio = gap(1e-2) / gap(5e-3);
        assert!(ratio > 16.0, "ratio {ratio}");
    }

    #[test]
    fn serial_solve_exponential() {
        let sys = OdeSystem::scalar_linear(-1.0);
        let mesh = TimeMesh::uniform(0.0, 1.0, 10).unwrap();
        let traj = serial_solve(&sys, &scalar(1.0), &mesh, &FineMethod::rk4(1e-3)).unwrap();
        assert_eq!(traj.len(), 11);
        assert_abs_diff_eq!(traj[10][0], (-1.0f64).exp(), epsilon = 1e-10);
    }

    #[test]
    fn serial_solve_single_interval() {
        let sys = make_benchmark("sir", &[]).unwrap();
        let x = DVector::from_vec(vec![0.3, 0.5, 0.2]);
        let mesh = TimeMesh::uniform(0.0, 2.0, 1).unwrap();
        let m = FineMethod::rk4(1e-2);
        let traj = serial_solve(&sys, &x, &mesh, &m).unwrap();
        assert_eq!(traj[1], fine_propagate(&sys, &x, 2.0, &m).unwrap());
    }

    #[test]
    fn serial_solve_tags_interval() {
        let sys = OdeSystem::scalar_linear(-1.0);
        let mesh = TimeMesh::from_nodes(vec![0.0, 0.5, 0.75]).unwrap();
        let err = serial_solve(&sys, &scalar(1.0), &mesh, &FineMethod::rk4(0.5)).unwrap_err();
        assert!(matches!(err, Error::Interval { index: 1, .. }));
    }

    #[test]
    fn trajectory_ends_at_propagated_state() {
        let sys = make_benchmark("brusselator", &[]).unwrap();
        let x = DVector::from_vec(vec![0.0, 1.0]);
        let m = FineMethod::rk4(0.01);
        let traj = fine_trajectory(&sys, &x, 0.2, &m).unwrap();
        assert_eq!(traj.len(), 21);
        assert_eq!(traj[20], fine_propagate(&sys, &x, 0.2, &m).unwrap());
    }

    #[test]
    fn fine_propagate_is_deterministic() {
        let sys = make_benchmark("lorenz", &[]).unwrap();
        let x = DVector::from_vec(vec![20.0, 5.0, -5.0]);
        let m = FineMethod::rk4(1e-3);
        let a = fine_propagate(&sys, &x, 0.5, &m).unwrap();
        let b = fine_propagate(&sys, &x, 0.5, &m).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }
}
