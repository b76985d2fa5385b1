//! Collocation training of the network outer layer.
//!
//! For an interval `[0, dt]` with nodes `t_1 < ... < t_C` the outer weights
//! minimize `|H' theta - F(1 x0^T + (H - H0) theta)|_F^2`.

mod grid;
pub mod lm;
mod residual;
mod train;

pub use grid::{collocation_nodes, quadrature_weights, CollocationGrid, NodeKind, MAX_QUADRATURE_NODES};
pub use lm::{levenberg_marquardt, LmOptions, LmReport, Termination};
pub use residual::{
    burgers_jacobian_apply, burgers_jacobian_apply_transpose, collocation_states, residual, residual_jacobian,
    BurgersJacobian,
};
pub use train::{train_coarse, TrainReport};
