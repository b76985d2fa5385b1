use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lm::{self, LeastSquares, LmOptions, LmReport, Termination};
use super::residual::{jacobian_unchecked, residual_into, BurgersJacobian};
use crate::problems::OdeSystem;
use crate::rpnn::{RpnnBasis, WeightMatrix};
use crate::{all_finite, Error, Result, State};

/// Relative tolerance of the inner CGLS solve on the Burgers operator.
const CG_TOL: f64 = 1e-12;

/// Outcome of fitting one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: usize,
    pub accepted: usize,
    pub rejected: usize,
    /// `|G|_F^2` at the returned weights.
    pub cost: f64,
    /// Largest row norm of `G`, i.e. the largest defect norm at a node.
    pub epsilon: f64,
    pub termination: Termination,
    /// True when the weights were carried over without running LM because the
    /// initial state did not change.
    pub reused: bool,
    pub cost_history: Vec<f64>,
}

impl TrainReport {
    fn from_lm(lm: LmReport, epsilon: f64) -> Self {
        TrainReport {
            iterations: lm.iterations,
            accepted: lm.accepted,
            rejected: lm.rejected,
            cost: lm.final_cost,
            epsilon,
            termination: lm.termination,
            reused: false,
            cost_history: lm.cost_history,
        }
    }

    /// A copy marked as reused, with no iterations spent.
    pub fn reused(&self) -> Self {
        TrainReport {
            iterations: 0,
            accepted: 0,
            rejected: 0,
            reused: true,
            cost_history: vec![self.cost],
            ..self.clone()
        }
    }
}

fn max_row_norm(g: &DMatrix<f64>) -> f64 {
    g.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
}

struct Collocation<'a> {
    basis: &'a RpnnBasis,
    x0: &'a State,
    system: &'a OdeSystem,
    buf: DMatrix<f64>,
}

impl Collocation<'_> {
    fn theta(&self, p: &DVector<f64>) -> WeightMatrix {
        DMatrix::from_column_slice(self.basis.hidden(), self.system.dim(), p.as_slice())
    }

    fn residual(&mut self, p: &DVector<f64>) -> Option<DVector<f64>> {
        let theta = self.theta(p);
        residual_into(self.basis, &theta, self.x0, self.system, &mut self.buf)
            .then(|| DVector::from_column_slice(self.buf.as_slice()))
    }
}

struct DenseCollocation<'a> {
    inner: Collocation<'a>,
    jac: DMatrix<f64>,
}

impl LeastSquares for DenseCollocation<'_> {
    fn residual(&mut self, p: &DVector<f64>) -> Option<DVector<f64>> {
        self.inner.residual(p)
    }

    fn linearize(&mut self, p: &DVector<f64>) -> Result<()> {
        let theta = self.inner.theta(p);
        self.jac = jacobian_unchecked(self.inner.basis, &theta, self.inner.x0, self.inner.system);
        if !all_finite(self.jac.as_slice()) {
            return Err(Error::NonFinite("residual Jacobian"));
        }
        Ok(())
    }

    fn normal_diagonal(&self) -> DVector<f64> {
        DVector::from_fn(self.jac.ncols(), |k, _| self.jac.column(k).norm_squared())
    }

    fn solve_damped(&self, r: &DVector<f64>, lambda: f64, scale: &DVector<f64>) -> Option<DVector<f64>> {
        lm::solve_damped_dense(&self.jac, r, lambda, scale)
    }
}

struct OperatorCollocation<'a> {
    inner: Collocation<'a>,
    op: Option<BurgersJacobian<'a>>,
    diag: DVector<f64>,
    /// Triangular factor of each state component's column block of `J`.
    blocks: Vec<DMatrix<f64>>,
}

impl LeastSquares for OperatorCollocation<'_> {
    fn residual(&mut self, p: &DVector<f64>) -> Option<DVector<f64>> {
        self.inner.residual(p)
    }

    fn linearize(&mut self, p: &DVector<f64>) -> Result<()> {
        let theta = self.inner.theta(p);
        let disc = self
            .inner
            .system
            .burgers()
            .expect("operator path needs the Burgers stencil");
        let op = BurgersJacobian::new(self.inner.basis, &theta, self.inner.x0, disc)?;
        let (m, h) = (op.nrows(), self.inner.basis.hidden());
        let d = op.ncols() / h;
        let mut unit = vec![0.0; op.ncols()];
        let mut cols = DMatrix::zeros(m, h);
        self.diag = DVector::zeros(op.ncols());
        self.blocks.clear();
        for k in 0..d {
            for j in 0..h {
                unit[k * h + j] = 1.0;
                op.apply_into(&unit, cols.column_mut(j).as_mut_slice());
                unit[k * h + j] = 0.0;
                self.diag[k * h + j] = cols.column(j).norm_squared();
            }
            self.blocks.push(cols.clone().qr().r());
        }
        if !all_finite(self.diag.as_slice()) {
            return Err(Error::NonFinite("residual Jacobian"));
        }
        self.op = Some(op);
        Ok(())
    }

    fn normal_diagonal(&self) -> DVector<f64> {
        self.diag.clone()
    }

    fn solve_damped(&self, r: &DVector<f64>, lambda: f64, scale: &DVector<f64>) -> Option<DVector<f64>> {
        let op = self.op.as_ref()?;
        let precond = BlockPreconditioner::new(&self.blocks, lambda, scale)?;
        cgls_damped(op, &precond, r, lambda, scale)
    }
}

/// CGLS on `min |J P y + r|^2 + lambda |S^(1/2) P y|^2` with the block-Jacobi
/// right preconditioner from [`BlockPreconditioner`]; returns `P y`.
///
/// Runs at most `10 n` iterations and keeps the iterate with the smallest
/// normal-equation residual.
fn cgls_damped(
    op: &BurgersJacobian<'_>,
    precond: &BlockPreconditioner,
    r: &DVector<f64>,
    lambda: f64,
    scale: &DVector<f64>,
) -> Option<DVector<f64>> {
    let (m, n) = (op.nrows(), op.ncols());
    let damp: Vec<f64> = (0..n).map(|k| (lambda * scale[k]).sqrt()).collect();

    // Augmented operator A = [J P; D P] applied to y, and its transpose.
    let mut scaled = vec![0.0; n];
    let mut top = vec![0.0; m];
    let apply = |y: &[f64], out_top: &mut [f64], out_bottom: &mut [f64], scaled: &mut [f64]| {
        precond.apply(y, scaled);
        for k in 0..n {
            out_bottom[k] = damp[k] * scaled[k];
        }
        op.apply_into(scaled, out_top);
    };
    let mut back = vec![0.0; n];
    let mut apply_t = |w_top: &[f64], w_bottom: &[f64], out: &mut [f64]| {
        op.apply_transpose_into(w_top, &mut back);
        for k in 0..n {
            back[k] += damp[k] * w_bottom[k];
        }
        precond.apply_transpose(&back, out);
    };

    let mut y = vec![0.0; n];
    let mut res_top: Vec<f64> = r.iter().map(|v| -v).collect();
    let mut res_bottom = vec![0.0; n];
    let mut s = vec![0.0; n];
    apply_t(&res_top, &res_bottom, &mut s);
    let mut dir = s.clone();
    let mut gamma: f64 = s.iter().map(|v| v * v).sum();
    let gamma0 = gamma;
    if gamma0 == 0.0 {
        return Some(DVector::zeros(n));
    }
    let mut best = (gamma, y.clone());
    let mut q_bottom = vec![0.0; n];

    for _ in 0..10 * n {
        apply(&dir, &mut top, &mut q_bottom, &mut scaled);
        let qq: f64 = top.iter().chain(q_bottom.iter()).map(|v| v * v).sum();
        if !(qq > 0.0) || !qq.is_finite() {
            break;
        }
        let alpha = gamma / qq;
        for k in 0..n {
            y[k] += alpha * dir[k];
            res_bottom[k] -= alpha * q_bottom[k];
        }
        for i in 0..m {
            res_top[i] -= alpha * top[i];
        }
        apply_t(&res_top, &res_bottom, &mut s);
        let gamma_new: f64 = s.iter().map(|v| v * v).sum();
        if !gamma_new.is_finite() {
            break;
        }
        if gamma_new < best.0 {
            best = (gamma_new, y.clone());
        }
        if gamma_new.sqrt() <= CG_TOL * gamma0.sqrt() {
            break;
        }
        let beta = gamma_new / gamma;
        gamma = gamma_new;
        for k in 0..n {
            dir[k] = s[k] + beta * dir[k];
        }
    }
    let mut delta = DVector::zeros(n);
    precond.apply(&best.1, delta.as_mut_slice());
    all_finite(delta.as_slice()).then_some(delta)
}

/// `P = blockdiag(R_k^-1)` where `R_k` is the triangular factor of
/// `[J_k; sqrt(lambda S_k)]` and `J_k` the columns of `J` belonging to state
/// component `k`. Exact for the block diagonal of the damped normal matrix, so
/// it absorbs both the ill-conditioning of `H'` and large damping.
struct BlockPreconditioner {
    factors: Vec<DMatrix<f64>>,
}

impl BlockPreconditioner {
    fn new(blocks: &[DMatrix<f64>], lambda: f64, scale: &DVector<f64>) -> Option<Self> {
        let mut factors = Vec::with_capacity(blocks.len());
        for (k, r) in blocks.iter().enumerate() {
            let h = r.ncols();
            let mut stacked = DMatrix::zeros(2 * h, h);
            stacked.view_mut((0, 0), (h, h)).copy_from(r);
            for j in 0..h {
                stacked[(h + j, j)] = (lambda * scale[k * h + j]).sqrt();
            }
            let f = stacked.qr().r();
            if (0..h).any(|j| !(f[(j, j)].abs() > 0.0)) {
                return None;
            }
            factors.push(f);
        }
        Some(BlockPreconditioner { factors })
    }

    fn apply(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(y);
        for (k, f) in self.factors.iter().enumerate() {
            let h = f.ncols();
            let mut block = nalgebra::DVectorViewMut::from_slice(&mut out[k * h..(k + 1) * h], h);
            f.solve_upper_triangular_mut(&mut block);
        }
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(y);
        for (k, f) in self.factors.iter().enumerate() {
            let h = f.ncols();
            let mut block = nalgebra::DVectorViewMut::from_slice(&mut out[k * h..(k + 1) * h], h);
            f.tr_solve_upper_triangular_mut(&mut block);
        }
    }
}

/// Fits `theta` so the network satisfies the ODE at the collocation nodes,
/// starting from `theta_init`.
///
/// The Burgers system uses the matrix-free Jacobian with an inner CGLS solve;
/// all other systems assemble the dense Jacobian.
pub fn train_coarse(
    basis: &RpnnBasis,
    x0: &State,
    system: &OdeSystem,
    theta_init: &WeightMatrix,
    opts: &LmOptions,
) -> Result<(WeightMatrix, TrainReport)> {
    let d = system.dim();
    if x0.len() != d {
        return Err(Error::shape("initial state", d, x0.len()));
    }
    if !all_finite(x0.as_slice()) {
        return Err(Error::NonFinite("initial state"));
    }
    if theta_init.shape() != (basis.hidden(), d) {
        return Err(Error::shape("initial weights", basis.hidden() * d, theta_init.len()));
    }
    let inner = Collocation {
        basis,
        x0,
        system,
        buf: DMatrix::zeros(basis.collocation(), d),
    };
    let init = DVector::from_column_slice(theta_init.as_slice());
    let (p, lm_report) = if system.burgers().is_some() {
        let mut problem = OperatorCollocation {
            inner,
            op: None,
            diag: DVector::zeros(0),
            blocks: Vec::new(),
        };
        lm::minimize(&mut problem, init, opts)?
    } else {
        let mut problem = DenseCollocation {
            inner,
            jac: DMatrix::zeros(0, 0),
        };
        lm::minimize(&mut problem, init, opts)?
    };
    let theta = DMatrix::from_column_slice(basis.hidden(), d, p.as_slice());
    let g = super::residual(basis, &theta, x0, system)?;
    let epsilon = max_row_norm(&g);
    Ok((theta, TrainReport::from_lm(lm_report, epsilon)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{burgers_semidiscretize, BurgersProfile};
    use crate::rpnn::{sample_basis, BasisOptions};

    #[test]
    fn zero_field_needs_no_iterations() {
        let basis = sample_basis(&BasisOptions::default(), 0.5).unwrap();
        let sys = OdeSystem::constant(DVector::zeros(3));
        let x0 = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let (theta, report) = train_coarse(&basis, &x0, &sys, &DMatrix::zeros(5, 3), &LmOptions::default()).unwrap();
        assert!(theta.iter().all(|&v| v == 0.0));
        assert_eq!(report.iterations, 0);
        assert_eq!(report.epsilon, 0.0);
    }

    #[test]
    fn decay_reaches_tiny_defect() {
        let basis = sample_basis(
            &BasisOptions {
                seed: 1,
                ..Default::default()
            },
            0.5,
        )
        .unwrap();
        let sys = OdeSystem::scalar_linear(-1.0);
        let x0 = DVector::from_element(1, 1.0);
        let (_, report) = train_coarse(&basis, &x0, &sys, &DMatrix::zeros(5, 1), &LmOptions::default()).unwrap();
        assert!(report.epsilon <= 1e-8, "{report:?}");
    }

    #[test]
    fn warm_start_is_immediate() {
        let basis = sample_basis(
            &BasisOptions {
                seed: 2,
                ..Default::default()
            },
            0.04,
        )
        .unwrap();
        let sys = crate::problems::make_benchmark("lorenz", &[]).unwrap();
        let x0 = DVector::from_vec(vec![20.0, 5.0, -5.0]);
        let opts = LmOptions::default();
        let (theta, _) = train_coarse(&basis, &x0, &sys, &DMatrix::zeros(5, 3), &opts).unwrap();
        let (_, again) = train_coarse(&basis, &x0, &sys, &theta, &opts).unwrap();
        assert!(again.iterations <= 1, "{again:?}");
    }

    #[test]
    fn burgers_operator_path_matches_dense_path() {
        let (sys, _) = burgers_semidiscretize(11, 0.5).unwrap();
        let x0 = BurgersProfile::Sine.sample(11);
        let basis = sample_basis(
            &BasisOptions {
                seed: 4,
                ..Default::default()
            },
            0.5,
        )
        .unwrap();
        let opts = LmOptions::default();
        let (theta_op, rep_op) = train_coarse(&basis, &x0, &sys, &DMatrix::zeros(5, 11), &opts).unwrap();

        let dense_sys = OdeSystem::new(
            "burgers-dense",
            Vec::new(),
            std::sync::Arc::new(sys.burgers().unwrap().clone()),
        );
        let (theta_dense, rep_dense) = train_coarse(&basis, &x0, &dense_sys, &DMatrix::zeros(5, 11), &opts).unwrap();
        assert!(
            rep_op.epsilon <= 1e-8 && rep_dense.epsilon <= 1e-8,
            "{rep_op:?} {rep_dense:?}"
        );
        let end_op = basis.eval(&theta_op, &x0, 0.5).unwrap();
        let end_dense = basis.eval(&theta_dense, &x0, 0.5).unwrap();
        assert!((end_op - end_dense).amax() <= 1e-6);
    }
}
