//! Collocation residual `G = H' theta - F(1 x0^T + (H - H0) theta)` and its
//! Jacobian with respect to `vec(theta)`.
//!
//! `vec` stacks columns: entry `(c, j)` of a `C x d` matrix sits at
//! `j * C + c`, and entry `(h, k)` of `theta` at `k * H + h`.

use nalgebra::{DMatrix, DVector};

use crate::problems::{BurgersDiscretization, OdeSystem};
use crate::rpnn::{RpnnBasis, WeightMatrix};
use crate::{all_finite, Error, Result, State};

fn check_shapes(basis: &RpnnBasis, theta: &WeightMatrix, x0: &State, dim: usize) -> Result<()> {
    if x0.len() != dim {
        return Err(Error::shape("initial state", dim, x0.len()));
    }
    if theta.nrows() != basis.hidden() {
        return Err(Error::shape("weight rows", basis.hidden(), theta.nrows()));
    }
    if theta.ncols() != dim {
        return Err(Error::shape("weight columns", dim, theta.ncols()));
    }
    Ok(())
}

/// Network states at the collocation nodes, one row per node.
pub fn collocation_states(basis: &RpnnBasis, theta: &WeightMatrix, x0: &State) -> DMatrix<f64> {
    let mut x = basis.feat_shift() * theta;
    for mut row in x.row_iter_mut() {
        row += x0.transpose();
    }
    x
}

/// Residual rows for `theta`, written into `out` (`C x d`). Returns `false`
/// when the field produced a non-finite value.
pub(crate) fn residual_into(
    basis: &RpnnBasis,
    theta: &WeightMatrix,
    x0: &State,
    system: &OdeSystem,
    out: &mut DMatrix<f64>,
) -> bool {
    let states = collocation_states(basis, theta, x0);
    out.gemm(1.0, basis.feat_hprime(), theta, 0.0);
    let d = system.dim();
    let mut x = vec![0.0; d];
    let mut f = vec![0.0; d];
    for c in 0..basis.collocation() {
        for j in 0..d {
            x[j] = states[(c, j)];
        }
        system.eval_into(&x, &mut f);
        for j in 0..d {
            out[(c, j)] -= f[j];
        }
    }
    all_finite(out.as_slice())
}

/// The `C x d` collocation residual; its squared Frobenius norm is the loss.
pub fn residual(basis: &RpnnBasis, theta: &WeightMatrix, x0: &State, system: &OdeSystem) -> Result<DMatrix<f64>> {
    check_shapes(basis, theta, x0, system.dim())?;
    let mut out = DMatrix::zeros(basis.collocation(), system.dim());
    if !residual_into(basis, theta, x0, system, &mut out) {
        return Err(Error::NonFinite("collocation residual"));
    }
    Ok(out)
}

/// Dense `Cd x Hd` Jacobian `I_d (x) H' - dvecF/dvecX (I_d (x) (H - H0))`.
pub fn residual_jacobian(
    basis: &RpnnBasis,
    theta: &WeightMatrix,
    x0: &State,
    system: &OdeSystem,
) -> Result<DMatrix<f64>> {
    check_shapes(basis, theta, x0, system.dim())?;
    let jac = jacobian_unchecked(basis, theta, x0, system);
    if !all_finite(jac.as_slice()) {
        return Err(Error::NonFinite("residual Jacobian"));
    }
    Ok(jac)
}

pub(crate) fn jacobian_unchecked(
    basis: &RpnnBasis,
    theta: &WeightMatrix,
    x0: &State,
    system: &OdeSystem,
) -> DMatrix<f64> {
    let (c_count, h_count, d) = (basis.collocation(), basis.hidden(), system.dim());
    let states = collocation_states(basis, theta, x0);
    let hp = basis.feat_hprime();
    let shift = basis.feat_shift();
    let mut out = DMatrix::zeros(c_count * d, h_count * d);
    let mut x = vec![0.0; d];
    let mut df = DMatrix::zeros(d, d);
    for c in 0..c_count {
        for j in 0..d {
            x[j] = states[(c, j)];
        }
        system.jacobian_into(&x, &mut df);
        for k in 0..d {
            for j in 0..d {
                let djk = df[(j, k)];
                if djk == 0.0 {
                    continue;
                }
                for h in 0..h_count {
                    out[(j * c_count + c, k * h_count + h)] = -djk * shift[(c, h)];
                }
            }
            for h in 0..h_count {
                out[(k * c_count + c, k * h_count + h)] += hp[(c, h)];
            }
        }
    }
    out
}

/// Matrix-free residual Jacobian for the Burgers system, linearized at one
/// `theta`.
#[derive(Debug, Clone)]
pub struct BurgersJacobian<'a> {
    basis: &'a RpnnBasis,
    disc: &'a BurgersDiscretization,
    /// Node states `x_c`, one grid vector per collocation node.
    states: Vec<Vec<f64>>,
    /// `D1 x_c` per node.
    gradients: Vec<Vec<f64>>,
}

impl<'a> BurgersJacobian<'a> {
    pub fn new(
        basis: &'a RpnnBasis,
        theta: &WeightMatrix,
        x0: &State,
        disc: &'a BurgersDiscretization,
    ) -> Result<Self> {
        check_shapes(basis, theta, x0, disc.grid_size())?;
        let x = collocation_states(basis, theta, x0);
        let n = disc.grid_size();
        let states: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
        let gradients = states
            .iter()
            .map(|u| {
                let mut g = vec![0.0; n];
                for (i, gi) in g.iter_mut().enumerate().take(n - 1).skip(1) {
                    *gi = disc.diff1(u, i);
                }
                g
            })
            .collect();
        Ok(BurgersJacobian {
            basis,
            disc,
            states,
            gradients,
        })
    }

    pub fn nrows(&self) -> usize {
        self.basis.collocation() * self.disc.grid_size()
    }

    pub fn ncols(&self) -> usize {
        self.basis.hidden() * self.disc.grid_size()
    }

    /// `J v`.
    pub fn apply(&self, v: &[f64]) -> Result<DVector<f64>> {
        if v.len() != self.ncols() {
            return Err(Error::shape("operator input", self.ncols(), v.len()));
        }
        let mut out = DVector::zeros(self.nrows());
        self.apply_into(v, out.as_mut_slice());
        Ok(out)
    }

    /// `J^T w`.
    pub fn apply_transpose(&self, w: &[f64]) -> Result<DVector<f64>> {
        if w.len() != self.nrows() {
            return Err(Error::shape("operator input", self.nrows(), w.len()));
        }
        let mut out = DVector::zeros(self.ncols());
        self.apply_transpose_into(w, out.as_mut_slice());
        Ok(out)
    }

    pub(crate) fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let (c_count, h_count, n) = (self.basis.collocation(), self.basis.hidden(), self.disc.grid_size());
        let hp = self.basis.feat_hprime();
        let shift = self.basis.feat_shift();
        let nu = self.disc.viscosity();
        let mut y = vec![0.0; n];
        for c in 0..c_count {
            // y = row c of (H - H0) V, and the H' V term directly into out.
            for j in 0..n {
                let col = &v[j * h_count..(j + 1) * h_count];
                let mut acc_y = 0.0;
                let mut acc_p = 0.0;
                for h in 0..h_count {
                    acc_y += shift[(c, h)] * col[h];
                    acc_p += hp[(c, h)] * col[h];
                }
                y[j] = acc_y;
                out[j * c_count + c] = acc_p;
            }
            let x = &self.states[c];
            let g = &self.gradients[c];
            for i in 1..n - 1 {
                let dfy = -g[i] * y[i] - x[i] * self.disc.diff1(&y, i) + nu * self.disc.diff2(&y, i);
                out[i * c_count + c] -= dfy;
            }
        }
    }

    pub(crate) fn apply_transpose_into(&self, w: &[f64], out: &mut [f64]) {
        let (c_count, h_count, n) = (self.basis.collocation(), self.basis.hidden(), self.disc.grid_size());
        let hp = self.basis.feat_hprime();
        let shift = self.basis.feat_shift();
        let nu = self.disc.viscosity();
        out.fill(0.0);
        let mut wc = vec![0.0; n];
        let mut xw = vec![0.0; n];
        let mut z = vec![0.0; n];
        for c in 0..c_count {
            for j in 0..n {
                wc[j] = w[j * c_count + c];
            }
            let x = &self.states[c];
            let g = &self.gradients[c];
            // Boundary rows of DF are zero, so only interior entries of w act.
            wc[0] = 0.0;
            wc[n - 1] = 0.0;
            for j in 0..n {
                xw[j] = x[j] * wc[j];
            }
            for k in 0..n {
                z[k] = -g[k] * wc[k] - self.disc.diff1_adjoint(&xw, k) + nu * self.disc.diff2_adjoint(&wc, k);
            }
            for j in 0..n {
                let wj = w[j * c_count + c];
                let zj = z[j];
                let col = &mut out[j * h_count..(j + 1) * h_count];
                for h in 0..h_count {
                    col[h] += hp[(c, h)] * wj - shift[(c, h)] * zj;
                }
            }
        }
    }

    /// Diagonal of `J^T J`, from the column norms.
    #[cfg(test)]
    pub(crate) fn normal_diagonal(&self) -> DVector<f64> {
        let cols = self.ncols();
        let mut e = vec![0.0; cols];
        let mut col = vec![0.0; self.nrows()];
        DVector::from_fn(cols, |k, _| {
            e[k] = 1.0;
            self.apply_into(&e, &mut col);
            e[k] = 0.0;
            col.iter().map(|v| v * v).sum()
        })
    }
}

/// `J v` for the Burgers residual without assembling `J`.
pub fn burgers_jacobian_apply(
    basis: &RpnnBasis,
    theta: &WeightMatrix,
    x0: &State,
    disc: &BurgersDiscretization,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    BurgersJacobian::new(basis, theta, x0, disc)?.apply(v.as_slice())
}

/// `J^T w` for the Burgers residual without assembling `J`.
pub fn burgers_jacobian_apply_transpose(
    basis: &RpnnBasis,
    theta: &WeightMatrix,
    x0: &State,
    disc: &BurgersDiscretization,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    BurgersJacobian::new(basis, theta, x0, disc)?.apply_transpose(w.as_slice())
}
