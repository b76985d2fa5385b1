//! Levenberg–Marquardt for small nonlinear least-squares problems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{all_finite, Error, Result};

/// Diagonal entries of `J^T J` below this switch the damping to `lambda I`.
const SCALING_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop once `|r|_2` falls to this.
    pub residual_tol: f64,
    /// Stop once a proposed step has `|delta|_2` at most this.
    pub step_tol: f64,
    pub lambda_init: f64,
    pub lambda_increase: f64,
    pub lambda_decrease: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iter: 100,
            residual_tol: 1e-10,
            step_tol: 1e-12,
            lambda_init: 1e-3,
            lambda_increase: 10.0,
            lambda_decrease: 10.0,
            lambda_min: 1e-12,
            lambda_max: 1e10,
        }
    }
}

impl LmOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.residual_tol,
            self.step_tol,
            self.lambda_init,
            self.lambda_increase,
            self.lambda_decrease,
            self.lambda_min,
            self.lambda_max,
        ]
        .iter()
        .all(|&v| v > 0.0 && v.is_finite());
        if !positive || self.max_iter == 0 {
            return Err(Error::InvalidArgument("LM options must be positive".into()));
        }
        if !(self.lambda_min < self.lambda_init && self.lambda_init < self.lambda_max) {
            return Err(Error::InvalidArgument(
                "need lambda_min < lambda_init < lambda_max".into(),
            ));
        }
        if self.lambda_increase <= 1.0 || self.lambda_decrease <= 1.0 {
            return Err(Error::InvalidArgument("damping factors must exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ResidualTol,
    StepTol,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmReport {
    /// Number of linearizations performed.
    pub iterations: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub initial_cost: f64,
    /// `|r|_2^2` at the returned parameters.
    pub final_cost: f64,
    pub final_lambda: f64,
    pub termination: Termination,
    /// Cost at the start and after every accepted step.
    pub cost_history: Vec<f64>,
}

/// A least-squares problem that can be linearized and can solve the damped
/// step `min |J delta + r|^2 + lambda |S^(1/2) delta|^2` at its current
/// linearization.
pub trait LeastSquares {
    /// Residual at `p`, or `None` if it is not finite.
    fn residual(&mut self, p: &DVector<f64>) -> Option<DVector<f64>>;

    fn linearize(&mut self, p: &DVector<f64>) -> Result<()>;

    /// Diagonal of `J^T J` at the current linearization.
    fn normal_diagonal(&self) -> DVector<f64>;

    fn solve_damped(&self, r: &DVector<f64>, lambda: f64, scale: &DVector<f64>) -> Option<DVector<f64>>;
}

/// Solves `[J; sqrt(lambda S)] delta = [-r; 0]` in the least-squares sense by
/// QR, which is the damped normal equation without squaring `J`.
pub fn solve_damped_dense(
    jac: &DMatrix<f64>,
    r: &DVector<f64>,
    lambda: f64,
    scale: &DVector<f64>,
) -> Option<DVector<f64>> {
    let (m, n) = jac.shape();
    let mut aug = DMatrix::zeros(m + n, n);
    aug.rows_mut(0, m).copy_from(jac);
    for k in 0..n {
        aug[(m + k, k)] = (lambda * scale[k]).sqrt();
    }
    let mut rhs = DVector::zeros(m + n);
    rhs.rows_mut(0, m).copy_from(&(-r));
    let qr = aug.qr();
    let qtb = qr.q().tr_mul(&rhs);
    let delta = qr.r().solve_upper_triangular(&qtb)?;
    all_finite(delta.as_slice()).then_some(delta)
}

struct DenseProblem<R, J> {
    residual: R,
    jacobian: J,
    jac: DMatrix<f64>,
}

impl<R, J> LeastSquares for DenseProblem<R, J>
where
    R: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    J: FnMut(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    fn residual(&mut self, p: &DVector<f64>) -> Option<DVector<f64>> {
        (self.residual)(p).ok().filter(|r| all_finite(r.as_slice()))
    }

    fn linearize(&mut self, p: &DVector<f64>) -> Result<()> {
        self.jac = (self.jacobian)(p)?;
        if !all_finite(self.jac.as_slice()) {
            return Err(Error::NonFinite("Jacobian"));
        }
        Ok(())
    }

    fn normal_diagonal(&self) -> DVector<f64> {
        DVector::from_fn(self.jac.ncols(), |k, _| self.jac.column(k).norm_squared())
    }

    fn solve_damped(&self, r: &DVector<f64>, lambda: f64, scale: &DVector<f64>) -> Option<DVector<f64>> {
        solve_damped_dense(&self.jac, r, lambda, scale)
    }
}

/// Levenberg–Marquardt from closures returning the residual vector and its
/// dense Jacobian.
pub fn levenberg_marquardt<R, J>(
    residual: R,
    jacobian: J,
    init: DVector<f64>,
    opts: &LmOptions,
) -> Result<(DVector<f64>, LmReport)>
where
    R: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    J: FnMut(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    let mut problem = DenseProblem {
        residual,
        jacobian,
        jac: DMatrix::zeros(0, 0),
    };
    minimize(&mut problem, init, opts)
}

/// Levenberg–Marquardt with Marquardt's diagonal scaling.
///
/// A step is accepted only if it lowers the cost. Damping is divided by
/// `lambda_decrease` after an accepted step and multiplied by
/// `lambda_increase` after a rejection (or a failed solve). Once it would
/// drop below `lambda_min` the damping is switched off entirely, giving plain
/// Gauss–Newton steps; any floor above zero would stall progress along the
/// small singular directions of the badly conditioned collocation Jacobians.
/// A rejection at zero damping restarts it at `lambda_min`. Rejections that
/// push the damping past `lambda_max` end the run with
/// [`Termination::StepTol`], since the step has then collapsed; a solve that
/// keeps failing up to `lambda_max` is an error.
pub fn minimize<P: LeastSquares + ?Sized>(
    problem: &mut P,
    init: DVector<f64>,
    opts: &LmOptions,
) -> Result<(DVector<f64>, LmReport)> {
    opts.validate()?;
    if !all_finite(init.as_slice()) {
        return Err(Error::NonFinite("initial parameters"));
    }
    let mut p = init;
    let mut r = problem.residual(&p).ok_or(Error::NonFinite("initial residual"))?;
    let mut cost = r.norm_squared();
    let mut lambda = opts.lambda_init;
    let mut report = LmReport {
        iterations: 0,
        accepted: 0,
        rejected: 0,
        initial_cost: cost,
        final_cost: cost,
        final_lambda: lambda,
        termination: Termination::MaxIter,
        cost_history: vec![cost],
    };

    let termination = 'outer: loop {
        if cost.sqrt() <= opts.residual_tol {
            break Termination::ResidualTol;
        }
        if report.iterations == opts.max_iter {
            break Termination::MaxIter;
        }
        report.iterations += 1;
        problem.linearize(&p)?;
        let diag = problem.normal_diagonal();
        let scale = if diag.iter().all(|&v| v >= SCALING_FLOOR) {
            diag
        } else {
            DVector::from_element(diag.len(), 1.0)
        };

        loop {
            let Some(delta) = problem.solve_damped(&r, lambda, &scale) else {
                lambda = (lambda * opts.lambda_increase).max(opts.lambda_min);
                if lambda > opts.lambda_max {
                    return Err(Error::LinearSolve {
                        lambda_max: opts.lambda_max,
                    });
                }
                continue;
            };
            if delta.norm() <= opts.step_tol {
                break 'outer Termination::StepTol;
            }
            let candidate = &p + &delta;
            let trial = problem.residual(&candidate);
            match trial {
                Some(r_new) if r_new.norm_squared() < cost => {
                    p = candidate;
                    cost = r_new.norm_squared();
                    r = r_new;
                    report.accepted += 1;
                    report.cost_history.push(cost);
                    lambda /= opts.lambda_decrease;
                    if lambda < opts.lambda_min {
                        lambda = 0.0;
                    }
                    break;
                }
                _ => {
                    report.rejected += 1;
                    lambda = (lambda * opts.lambda_increase).max(opts.lambda_min);
                    if lambda > opts.lambda_max {
                        break 'outer Termination::StepTol;
                    }
                }
            }
        }
    };

    report.termination = termination;
    report.final_cost = cost;
    report.final_lambda = lambda;
    Ok((p, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn linear_least_squares_matches_normal_equations() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 2.0, 4.0]);
        let normal = (a.transpose() * &a).lu().solve(&(a.transpose() * &b)).unwrap();
        let (p, report) = levenberg_marquardt(
            |p: &DVector<f64>| Ok(&a * p - &b),
            |_: &DVector<f64>| Ok(a.clone()),
            DVector::zeros(2),
            &LmOptions::default(),
        )
        .unwrap();
        assert!(report.iterations <= 5, "{report:?}");
        assert_abs_diff_eq!(p.as_slice(), normal.as_slice(), epsilon = 1e-10);
    }

    #[test]
    fn zero_residual_returns_immediately() {
        let (p, report) = levenberg_marquardt(
            |p: &DVector<f64>| Ok(p - DVector::from_element(2, 3.0)),
            |_: &DVector<f64>| Ok(DMatrix::identity(2, 2)),
            DVector::from_element(2, 3.0),
            &LmOptions::default(),
        )
        .unwrap();
        assert_eq!(report.iterations, 0);
        assert_eq!(report.termination, Termination::ResidualTol);
        assert_eq!(p, DVector::from_element(2, 3.0));
    }

    #[test]
    fn rosenbrock() {
        let (p, report) = levenberg_marquardt(
            |p: &DVector<f64>| Ok(DVector::from_vec(vec![1.0 - p[0], 10.0 * (p[1] - p[0] * p[0])])),
            |p: &DVector<f64>| Ok(DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, -20.0 * p[0], 10.0])),
            DVector::from_vec(vec![-1.2, 1.0]),
            &LmOptions::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(p[1], 1.0, epsilon = 1e-8);
        assert!(report.cost_history.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn invalid_options_rejected() {
        let opts = LmOptions {
            lambda_init: 1e11,
            ..Default::default()
        };
        assert!(opts.validate().is_err());
    }

    #[test]
    fn non_finite_trials_are_rejected() {
        // sqrt blows up for negative arguments; LM must back off instead of
        // accepting a NaN cost.
        let (p, report) = levenberg_marquardt(
            |p: &DVector<f64>| {
                let v = if p[0] < 0.0 { f64::NAN } else { p[0].sqrt() - 0.5 };
                Ok(DVector::from_element(1, v))
            },
            |p: &DVector<f64>| Ok(DMatrix::from_element(1, 1, 0.5 / p[0].max(1e-300).sqrt())),
            DVector::from_element(1, 4.0),
            &LmOptions::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(p[0], 0.25, epsilon = 1e-9);
        assert!(report.final_cost <= report.initial_cost);
    }
}
