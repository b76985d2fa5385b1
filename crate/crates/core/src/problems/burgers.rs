use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{OdeSystem, VectorField};
use crate::{Error, Result, State};

pub(crate) const DEFAULT_GRID_SIZE: usize = 51;
pub(crate) const DEFAULT_VISCOSITY: f64 = 1.0 / 50.0;

/// Centered finite-difference semi-discretization of the viscous Burgers
/// equation `u_t + u u_x = nu u_xx` on `[0, 1]` with homogeneous Dirichlet
/// boundaries.
///
/// The boundary values stay in the state vector; the first and last rows of
/// both difference matrices are zero so their time derivative vanishes.
#[derive(Debug, Clone)]
pub struct BurgersDiscretization {
    grid_size: usize,
    viscosity: f64,
    dx: f64,
    d1: DMatrix<f64>,
    d2: DMatrix<f64>,
}

impl BurgersDiscretization {
    pub fn new(grid_size: usize, viscosity: f64) -> Result<Self> {
        if grid_size < 3 {
            return Err(Error::InvalidArgument(format!(
                "Burgers grid needs at least 3 points, got {grid_size}"
            )));
        }
        if !(viscosity.is_finite() && viscosity >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "viscosity must be finite and non-negative, got {viscosity}"
            )));
        }
        let n = grid_size;
        let dx = 1.0 / (n - 1) as f64;
        let mut d1 = DMatrix::zeros(n, n);
        let mut d2 = DMatrix::zeros(n, n);
        for i in 1..n - 1 {
            d1[(i, i - 1)] = -0.5 / dx;
            d1[(i, i + 1)] = 0.5 / dx;
            d2[(i, i - 1)] = 1.0 / (dx * dx);
            d2[(i, i)] = -2.0 / (dx * dx);
            d2[(i, i + 1)] = 1.0 / (dx * dx);
        }
        Ok(BurgersDiscretization {
            grid_size,
            viscosity,
            dx,
            d1,
            d2,
        })
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn viscosity(&self) -> f64 {
        self.viscosity
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// First-order centered difference matrix (boundary rows zero).
    pub fn d1(&self) -> &DMatrix<f64> {
        &self.d1
    }

    /// Second-order centered difference matrix (boundary rows zero).
    pub fn d2(&self) -> &DMatrix<f64> {
        &self.d2
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.grid_size).map(|i| i as f64 * self.dx).collect()
    }

    /// `(D1 u)_i` for an interior index.
    #[inline]
    pub(crate) fn diff1(&self, u: &[f64], i: usize) -> f64 {
        (u[i + 1] - u[i - 1]) * (0.5 / self.dx)
    }

    /// `(D2 u)_i` for an interior index.
    #[inline]
    pub(crate) fn diff2(&self, u: &[f64], i: usize) -> f64 {
        (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (self.dx * self.dx)
    }

    /// `(u^T D1)_k`, the adjoint stencil of [`diff1`](Self::diff1); the zero
    /// boundary rows of `D1` drop out.
    #[inline]
    pub(crate) fn diff1_adjoint(&self, w: &[f64], k: usize) -> f64 {
        let n = self.grid_size;
        let c = 0.5 / self.dx;
        let mut acc = 0.0;
        // row k-1 contributes +c at column k, row k+1 contributes -c.
        if k >= 2 {
            acc += c * w[k - 1];
        }
        if k + 2 < n {
            acc -= c * w[k + 1];
        }
        acc
    }

    /// `(w^T D2)_k`.
    #[inline]
    pub(crate) fn diff2_adjoint(&self, w: &[f64], k: usize) -> f64 {
        let n = self.grid_size;
        let c = 1.0 / (self.dx * self.dx);
        let mut acc = 0.0;
        if k >= 1 && k + 1 < n {
            acc -= 2.0 * c * w[k];
        }
        if k >= 2 {
            acc += c * w[k - 1];
        }
        if k + 2 < n {
            acc += c * w[k + 1];
        }
        acc
    }
}

impl VectorField for BurgersDiscretization {
    fn dim(&self) -> usize {
        self.grid_size
    }

    fn eval(&self, u: &[f64], out: &mut [f64]) {
        let n = self.grid_size;
        out[0] = 0.0;
        out[n - 1] = 0.0;
        for i in 1..n - 1 {
            out[i] = -u[i] * self.diff1(u, i) + self.viscosity * self.diff2(u, i);
        }
    }

    /// `-diag(D1 u) - diag(u) D1 + nu D2`, boundary rows zero.
    fn jacobian(&self, u: &[f64], j: &mut DMatrix<f64>) {
        let n = self.grid_size;
        let c1 = 0.5 / self.dx;
        let c2 = self.viscosity / (self.dx * self.dx);
        j.fill(0.0);
        for i in 1..n - 1 {
            j[(i, i - 1)] = u[i] * c1 + c2;
            j[(i, i)] = -self.diff1(u, i) - 2.0 * c2;
            j[(i, i + 1)] = -u[i] * c1 + c2;
        }
    }

    fn component_names(&self) -> Vec<String> {
        (0..self.grid_size).map(|i| format!("u{i}")).collect()
    }
}

/// Builds the Burgers system on `grid_size` equispaced points of `[0, 1]`.
pub fn burgers_semidiscretize(grid_size: usize, viscosity: f64) -> Result<(OdeSystem, BurgersDiscretization)> {
    let disc = BurgersDiscretization::new(grid_size, viscosity)?;
    Ok((OdeSystem::from_burgers(disc.clone()), disc))
}

/// Initial profiles used in the Burgers experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BurgersProfile {
    /// `sin(2 pi x)`
    Sine,
    /// `x (1 - x)`
    Quadratic,
    /// `sin(2 pi x) + cos(4 pi x) - cos(8 pi x)`
    Waves,
}

impl BurgersProfile {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            BurgersProfile::Sine => (2.0 * PI * x).sin(),
            BurgersProfile::Quadratic => x * (1.0 - x),
            BurgersProfile::Waves => (2.0 * PI * x).sin() + (4.0 * PI * x).cos() - (8.0 * PI * x).cos(),
        }
    }

    /// Samples the profile on the grid; boundary entries are pinned to zero.
    pub fn sample(self, grid_size: usize) -> State {
        let dx = 1.0 / (grid_size - 1) as f64;
        let mut u = DVector::from_fn(grid_size, |i, _| self.eval(i as f64 * dx));
        u[0] = 0.0;
        u[grid_size - 1] = 0.0;
        u
    }
}
