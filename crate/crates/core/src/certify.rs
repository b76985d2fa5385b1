//! A-posteriori error certificates for trained networks.
//!
//! With the defect `d(t) = N'(t) - F(N(t))`, the error of the network on
//! `[0, dt]` obeys `|x(t) - N(t)| <= delta * int_0^dt |d(s)| ds`, where
//! `delta` bounds the sensitivity of the flow to perturbations. The integral
//! is split into the quadrature of `|d|` at the collocation nodes (each at
//! most `epsilon`) and the interpolation remainder, estimated from finite
//! differences of the defect.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::collocation::CollocationGrid;
use crate::integrators::{fine_trajectory, FineMethod};
use crate::parareal::PararealResult;
use crate::problems::OdeSystem;
use crate::rpnn::{RpnnBasis, WeightMatrix};
use crate::{all_finite, Error, Result, State};

/// Number of uniform defect samples used for the derivative estimate.
pub const DEFECT_SAMPLES: usize = 201;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Largest defect norm at the collocation nodes.
    pub epsilon: f64,
    /// Sensitivity factor used by the bound, `exp(max(M, 0) dt)`.
    pub delta: f64,
    /// Sample-based estimate of the largest log-norm of `DF`.
    pub log_norm: f64,
    /// `sum |rho_c|`.
    pub rho_sum: f64,
    /// `delta * epsilon * rho_sum`.
    pub eps_term: f64,
    /// `(1/p!) int_0^1 |prod (s - s_c)| ds` for the nodes rescaled to `[0, 1]`.
    pub peano_constant: f64,
    /// Estimated `max |d^(p)|` over the interval.
    pub derivative_bound: f64,
    /// Estimated `delta * peano_constant * derivative_bound * dt^(p+1)`.
    pub quad_term: f64,
    pub total: f64,
    /// Largest sampled defect norm over the interval.
    pub sup_defect: f64,
    /// Log-norm bound `sup_defect (e^{M dt} - 1) / M` built from the sampled
    /// defect.
    pub defect_bound: f64,
}

/// `N'(t) - F(N(t))`.
pub fn defect(basis: &RpnnBasis, theta: &WeightMatrix, x0: &State, system: &OdeSystem, t: f64) -> Result<State> {
    let value = basis.eval(theta, x0, t)?;
    let deriv = basis.eval_derivative(theta, t)?;
    let f = system.eval_field(&value)?;
    let d = deriv - f;
    if !all_finite(d.as_slice()) {
        return Err(Error::NonFinite("defect"));
    }
    Ok(d)
}

/// Logarithmic 2-norm: the largest eigenvalue of `(A + A^T) / 2`.
pub fn log_norm_2(a: &DMatrix<f64>) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::InvalidArgument(format!(
            "log-norm needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("log-norm of an empty matrix".into()));
    }
    let sym = (a + a.transpose()) * 0.5;
    Ok(SymmetricEigen::new(sym).eigenvalues.max())
}

/// Largest log-norm of the Jacobian over the given states. This only
/// under-approximates the maximum over the region the states come from.
pub fn field_log_norm_bound(system: &OdeSystem, states: &[State]) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::InvalidArgument("log-norm bound needs at least one state".into()));
    }
    let mut m = f64::NEG_INFINITY;
    for x in states {
        m = m.max(log_norm_2(&system.eval_jacobian(x)?)?);
    }
    Ok(m)
}

/// `eps (e^{M t} - 1) / M`, with the limit `eps t` (plus the next series term)
/// when `|M t|` is tiny.
pub fn defect_error_bound(eps: f64, m: f64, t: f64) -> f64 {
    let mt = m * t;
    if mt.abs() < 1e-8 {
        eps * t * (1.0 + mt / 2.0)
    } else {
        eps * mt.exp_m1() / m
    }
}

/// `exp(M dt)`.
pub fn sensitivity_bound(m: f64, dt: f64) -> f64 {
    (m * dt).exp()
}

/// Exact `(1/p!) int_0^1 |prod_c (s - s_c)| ds` for nodes `s_c` in `[0, 1]`.
pub fn peano_constant(nodes: &[f64]) -> f64 {
    // Coefficients of prod (s - s_c), lowest degree first.
    let mut poly = vec![1.0];
    for &s in nodes {
        let mut next = vec![0.0; poly.len() + 1];
        for (k, &c) in poly.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= s * c;
        }
        poly = next;
    }
    let antiderivative = |x: f64| {
        poly.iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + c / (k + 1) as f64)
            * x
    };
    let mut breaks: Vec<f64> = nodes.iter().copied().filter(|s| (0.0..=1.0).contains(s)).collect();
    breaks.push(0.0);
    breaks.push(1.0);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let integral: f64 = breaks
        .windows(2)
        .map(|w| (antiderivative(w[1]) - antiderivative(w[0])).abs())
        .sum();
    let factorial: f64 = (1..=nodes.len()).map(|k| k as f64).product();
    integral / factorial
}

/// Weights `w` with `f^(order)(x_i) ~ sum_k w_k f(x_{i+k}) / h^order` for the
/// integer offsets given.
fn fd_weights(offsets: &[f64], order: usize) -> Option<Vec<f64>> {
    let n = offsets.len();
    let vander = DMatrix::from_fn(n, n, |m, k| offsets[k].powi(m as i32));
    let factorial: f64 = (1..=order).map(|k| k as f64).product();
    let rhs = DVector::from_fn(n, |m, _| if m == order { factorial } else { 0.0 });
    vander.lu().solve(&rhs).map(|w| w.iter().copied().collect())
}

/// Componentwise maxima of `|f^(order)|` over uniform samples with spacing
/// `h`: centered stencils inside, shifted one-sided ones near the ends.
fn max_derivative(samples: &[State], h: f64, order: usize) -> Result<DVector<f64>> {
    let count = samples.len();
    let width = if order.is_multiple_of(2) { order + 1 } else { order + 2 };
    if count < width {
        return Err(Error::InvalidArgument(
            "too few samples for the difference stencil".into(),
        ));
    }
    let d = samples[0].len();
    let mut maxima = DVector::zeros(d);
    let scale = h.powi(order as i32);
    let mut cached: Option<(usize, Vec<f64>)> = None;
    for i in 0..count {
        let start = i.saturating_sub(width / 2).min(count - width);
        let shift = i - start;
        let weights = match &cached {
            Some((s, w)) if *s == shift => w.clone(),
            _ => {
                let offsets: Vec<f64> = (0..width).map(|k| k as f64 - shift as f64).collect();
                let w = fd_weights(&offsets, order).ok_or(Error::Singular("difference stencil"))?;
                cached = Some((shift, w.clone()));
                w
            }
        };
        for j in 0..d {
            let est: f64 = weights
                .iter()
                .enumerate()
                .map(|(k, w)| w * samples[start + k][j])
                .sum::<f64>()
                / scale;
            maxima[j] = f64::max(maxima[j], est.abs());
        }
    }
    Ok(maxima)
}

/// Certificate for one trained network on `[0, dt]`, given a log-norm
/// estimate `m`.
pub fn quadrature_certificate(
    basis: &RpnnBasis,
    theta: &WeightMatrix,
    x0: &State,
    system: &OdeSystem,
    grid: &CollocationGrid,
    m: f64,
) -> Result<Certificate> {
    if !m.is_finite() {
        return Err(Error::NonFinite("log-norm estimate"));
    }
    let dt = basis.step();
    if grid.step.to_bits() != dt.to_bits() || grid.nodes.len() != basis.collocation() {
        return Err(Error::InvalidArgument("grid does not match the basis".into()));
    }
    let mut epsilon: f64 = 0.0;
    for &t in &grid.nodes {
        epsilon = epsilon.max(defect(basis, theta, x0, system, t)?.norm());
    }
    let delta = (m.max(0.0) * dt).exp();
    let rho_sum = grid.abs_weight_sum();
    let eps_term = delta * epsilon * rho_sum;

    let h = dt / (DEFECT_SAMPLES - 1) as f64;
    let samples = (0..DEFECT_SAMPLES)
        .map(|k| {
            let t = if k == DEFECT_SAMPLES - 1 { dt } else { k as f64 * h };
            defect(basis, theta, x0, system, t)
        })
        .collect::<Result<Vec<_>>>()?;
    let sup_defect = samples.iter().map(|s| s.norm()).fold(0.0, f64::max);
    let p = grid.order;
    let derivative_bound = max_derivative(&samples, h, p)?.norm();
    let scaled_nodes: Vec<f64> = grid.nodes.iter().map(|t| t / dt).collect();
    let peano = peano_constant(&scaled_nodes);
    let quad_term = delta * peano * derivative_bound * dt.powi(p as i32 + 1);

    Ok(Certificate {
        epsilon,
        delta,
        log_norm: m,
        rho_sum,
        eps_term,
        peano_constant: peano,
        derivative_bound,
        quad_term,
        total: eps_term + quad_term,
        sup_defect,
        defect_bound: defect_error_bound(sup_defect, m, dt),
    })
}

/// Certificates for every interval of a Parareal result. The log-norm for an
/// interval is taken over the network at the defect sample times together
/// with the fine trajectory from the same node.
pub fn certify_result(system: &OdeSystem, result: &PararealResult, fine: &FineMethod) -> Result<Vec<Certificate>> {
    (0..result.mesh.intervals())
        .map(|n| {
            let tag = |e: Error| Error::Interval {
                index: n,
                source: Box::new(e),
            };
            let basis = &result.bases[n];
            let theta = &result.weights[n];
            let x = &result.nodes[n];
            let dt = basis.step();
            let mut states = fine_trajectory(system, x, dt, fine).map_err(tag)?;
            for k in 0..DEFECT_SAMPLES {
                let t = dt * k as f64 / (DEFECT_SAMPLES - 1) as f64;
                states.push(basis.eval(theta, x, t).map_err(tag)?);
            }
            let m = field_log_norm_bound(system, &states).map_err(tag)?;
            quadrature_certificate(basis, theta, x, system, basis.grid(), m).map_err(tag)
        })
        .collect()
}
