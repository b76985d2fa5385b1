//! Parallel-in-time integration with the hybrid Parareal scheme.
//!
//! The coarse propagator of each Parareal sub-interval is a random projection
//! neural network (a two-layer network with frozen, randomly sampled inner
//! weights) fitted online by collocation of the ODE residual with a
//! Levenberg–Marquardt solver. The fine propagator is a classical one-step
//! method (RK4 or implicit Euler with Newton) iterated at a small step.
//!
//! Module map:
//!
//! * [`problems`]: vector fields, analytic Jacobians and the benchmark systems.
//! * [`integrators`]: fine one-step methods and their composition.
//! * [`rpnn`]: the network ansatz, sampled basis and feature matrices.
//! * [`collocation`]: collocation grids, residual/Jacobian assembly and the trainer.
//! * [`parareal`]: the hybrid Parareal driver and the piecewise evaluator.
//! * [`certify`]: a-posteriori error certificates for trained networks.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod collocation;
mod error;
pub mod integrators;
pub mod mesh;
pub mod parareal;
pub mod problems;
pub mod rpnn;
mod sweep;

pub use error::{Error, Result};
pub use mesh::TimeMesh;
pub use sweep::{with_workers, SweepMode};

/// State vectors are plain dense column vectors.
pub type State = nalgebra::DVector<f64>;

pub(crate) fn all_finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}
