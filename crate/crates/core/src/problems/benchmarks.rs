use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{Benchmark, OdeSystem, VectorField};

/// Mass ratio used by the Arenstorf setup.
pub(crate) const ARENSTORF_A: f64 = 0.12277471;

/// Initial velocity `v2(0)` of the Arenstorf orbit, kept at full literal
/// precision and rounded only by the float parser.
#[allow(clippy::excessive_precision)]
pub const ARENSTORF_INITIAL_VELOCITY: f64 = -2.00158510637908252240537862224;

pub(crate) fn parameter_names(bench: Benchmark) -> &'static [&'static str] {
    match bench {
        Benchmark::Sir => &["beta", "gamma"],
        Benchmark::Rober => &["k1", "k2", "k3"],
        Benchmark::Lorenz => &["sigma", "r", "b"],
        Benchmark::Arenstorf => &["a"],
        Benchmark::Brusselator => &["A", "B"],
        Benchmark::Burgers => &["nu", "grid_size"],
    }
}

fn named(pairs: &[(&str, f64)]) -> Vec<(String, f64)> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// SIR epidemic model.
#[derive(Debug, Clone, Copy)]
pub struct Sir {
    pub beta: f64,
    pub gamma: f64,
}

impl Sir {
    pub fn new(beta: f64, gamma: f64) -> Self {
        Sir { beta, gamma }
    }

    pub fn into_system(self) -> OdeSystem {
        let params = named(&[("beta", self.beta), ("gamma", self.gamma)]);
        OdeSystem::new("sir", params, Arc::new(self))
    }
}

impl VectorField for Sir {
    fn dim(&self) -> usize {
        3
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let infection = self.beta * x[0] * x[1];
        let recovery = self.gamma * x[1];
        out[0] = -infection;
        out[1] = infection - recovery;
        out[2] = recovery;
    }

    fn jacobian(&self, x: &[f64], j: &mut DMatrix<f64>) {
        let (b, g) = (self.beta, self.gamma);
        j.copy_from_slice(&[
            // column-major
            -b * x[1],
            b * x[1],
            0.0,
            -b * x[0],
            b * x[0] - g,
            g,
            0.0,
            0.0,
            0.0,
        ]);
    }
}

/// Robertson's stiff chemical kinetics problem.
#[derive(Debug, Clone, Copy)]
pub struct Rober {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl Rober {
    pub fn new(k1: f64, k2: f64, k3: f64) -> Self {
        Rober { k1, k2, k3 }
    }

    pub fn into_system(self) -> OdeSystem {
        let params = named(&[("k1", self.k1), ("k2", self.k2), ("k3", self.k3)]);
        OdeSystem::new("rober", params, Arc::new(self))
    }
}

impl VectorField for Rober {
    fn dim(&self) -> usize {
        3
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let slow = self.k1 * x[0];
        let fast = self.k2 * x[1] * x[1];
        let mixed = self.k3 * x[1] * x[2];
        out[0] = -slow + mixed;
        out[1] = slow - fast - mixed;
        out[2] = fast;
    }

    fn jacobian(&self, x: &[f64], j: &mut DMatrix<f64>) {
        let Rober { k1, k2, k3 } = *self;
        j.copy_from_slice(&[
            -k1,
            k1,
            0.0,
            k3 * x[2],
            -2.0 * k2 * x[1] - k3 * x[2],
            2.0 * k2 * x[1],
            k3 * x[1],
            -k3 * x[1],
            0.0,
        ]);
    }
}

/// Lorenz system.
#[derive(Debug, Clone, Copy)]
pub struct Lorenz {
    pub sigma: f64,
    pub r: f64,
    pub b: f64,
}

impl Lorenz {
    pub fn new(sigma: f64, r: f64, b: f64) -> Self {
        Lorenz { sigma, r, b }
    }

    pub fn into_system(self) -> OdeSystem {
        let params = named(&[("sigma", self.sigma), ("r", self.r), ("b", self.b)]);
        OdeSystem::new("lorenz", params, Arc::new(self))
    }
}

impl VectorField for Lorenz {
    fn dim(&self) -> usize {
        3
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.sigma * (x[1] - x[0]);
        out[1] = x[0] * (self.r - x[2]) - x[1];
        out[2] = x[0] * x[1] - self.b * x[2];
    }

    fn jacobian(&self, x: &[f64], j: &mut DMatrix<f64>) {
        let Lorenz { sigma, r, b } = *self;
        j.copy_from_slice(&[-sigma, r - x[2], x[1], sigma, -1.0, x[0], 0.0, -x[0], -b]);
    }
}

/// Restricted three-body problem in first-order form with state
/// `(x1, x2, v1, v2)`, where `v = x'`.
#[derive(Debug, Clone, Copy)]
pub struct Arenstorf {
    pub a: f64,
    pub b: f64,
}

impl Arenstorf {
    /// The second mass ratio is always `1 - a`.
    pub fn new(a: f64) -> Self {
        Arenstorf { a, b: 1.0 - a }
    }

    pub fn into_system(self) -> OdeSystem {
        let params = named(&[("a", self.a), ("b", self.b)]);
        OdeSystem::new("arenstorf", params, Arc::new(self))
    }

    /// Returns `(1/D1, 1/D2, 1/r1^5, 1/r2^5)`.
    #[inline]
    fn distances(&self, x1: f64, x2: f64) -> (f64, f64, f64, f64) {
        let r1sq = (x1 + self.a).powi(2) + x2 * x2;
        let r2sq = (x1 - self.b).powi(2) + x2 * x2;
        let r1 = r1sq.sqrt();
        let r2 = r2sq.sqrt();
        let inv_d1 = 1.0 / (r1sq * r1);
        let inv_d2 = 1.0 / (r2sq * r2);
        (inv_d1, inv_d2, inv_d1 / r1sq, inv_d2 / r2sq)
    }
}

impl VectorField for Arenstorf {
    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let (x1, x2, v1, v2) = (x[0], x[1], x[2], x[3]);
        let (inv_d1, inv_d2, _, _) = self.distances(x1, x2);
        out[0] = v1;
        out[1] = v2;
        out[2] = x1 + 2.0 * v2 - self.b * (x1 + self.a) * inv_d1 - self.a * (x1 - self.b) * inv_d2;
        out[3] = x2 - 2.0 * v1 - self.b * x2 * inv_d1 - self.a * x2 * inv_d2;
    }

    fn jacobian(&self, x: &[f64], j: &mut DMatrix<f64>) {
        let (x1, x2) = (x[0], x[1]);
        let (a, b) = (self.a, self.b);
        let (inv_d1, inv_d2, inv_r1_5, inv_r2_5) = self.distances(x1, x2);
        let p = x1 + a;
        let q = x1 - b;

        // d/dx of (p / D1) etc.
        let dv1_dx1 = 1.0 - b * (inv_d1 - 3.0 * p * p * inv_r1_5) - a * (inv_d2 - 3.0 * q * q * inv_r2_5);
        let dv1_dx2 = 3.0 * b * p * x2 * inv_r1_5 + 3.0 * a * q * x2 * inv_r2_5;
        let dv2_dx1 = 3.0 * b * x2 * p * inv_r1_5 + 3.0 * a * x2 * q * inv_r2_5;
        let dv2_dx2 = 1.0 - b * (inv_d1 - 3.0 * x2 * x2 * inv_r1_5) - a * (inv_d2 - 3.0 * x2 * x2 * inv_r2_5);

        j.fill(0.0);
        j[(0, 2)] = 1.0;
        j[(1, 3)] = 1.0;
        j[(2, 0)] = dv1_dx1;
        j[(2, 1)] = dv1_dx2;
        j[(2, 3)] = 2.0;
        j[(3, 0)] = dv2_dx1;
        j[(3, 1)] = dv2_dx2;
        j[(3, 2)] = -2.0;
    }

    fn component_names(&self) -> Vec<String> {
        ["x1", "x2", "v1", "v2"].map(String::from).to_vec()
    }
}

/// Brusselator reaction model.
#[derive(Debug, Clone, Copy)]
pub struct Brusselator {
    pub a: f64,
    pub b: f64,
}

impl Brusselator {
    pub fn new(a: f64, b: f64) -> Self {
        Brusselator { a, b }
    }

    pub fn into_system(self) -> OdeSystem {
        let params = named(&[("A", self.a), ("B", self.b)]);
        OdeSystem::new("brusselator", params, Arc::new(self))
    }
}

impl VectorField for Brusselator {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let cubic = x[0] * x[0] * x[1];
        out[0] = self.a + cubic - (self.b + 1.0) * x[0];
        out[1] = self.b * x[0] - cubic;
    }

    fn jacobian(&self, x: &[f64], j: &mut DMatrix<f64>) {
        let xy = 2.0 * x[0] * x[1];
        let xx = x[0] * x[0];
        j.copy_from_slice(&[xy - (self.b + 1.0), self.b - xy, xx, -xx]);
    }
}

/// Affine field `x' = A x + c`.
#[derive(Debug, Clone)]
pub struct Affine {
    matrix: DMatrix<f64>,
    offset: DVector<f64>,
}

impl Affine {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>) -> Self {
        assert!(matrix.is_square(), "affine field needs a square matrix");
        assert_eq!(matrix.nrows(), offset.len(), "offset length must match the matrix");
        Affine { matrix, offset }
    }
}

impl VectorField for Affine {
    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.offset[i]
                + x.iter()
                    .enumerate()
                    .map(|(k, xk)| self.matrix[(i, k)] * xk)
                    .sum::<f64>();
        }
    }

    fn jacobian(&self, _x: &[f64], j: &mut DMatrix<f64>) {
        j.copy_from(&self.matrix);
    }
}
