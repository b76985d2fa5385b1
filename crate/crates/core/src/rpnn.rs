//! Random projection networks `N(t) = x0 + theta^T (tanh(a t + b) - tanh(b))`
//! on one sub-interval `[0, dt]`.
//!
//! The inner weights `a` and biases `b` are sampled once and frozen; only the
//! outer layer `theta` (an `H x d` matrix) is trained.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::collocation::{CollocationGrid, NodeKind};
use crate::{Error, Result, State};

/// Bases whose `H'` condition number exceeds this are redrawn.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Total number of draws before giving up on a well-conditioned basis.
pub const MAX_DRAWS: usize = 10;

/// Outer-layer weights, `H x d`.
pub type WeightMatrix = DMatrix<f64>;

/// Settings for sampling a basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisOptions {
    pub hidden: usize,
    pub collocation: usize,
    pub nodes: NodeKind,
    pub bounds: (f64, f64),
    pub seed: u64,
}

impl Default for BasisOptions {
    fn default() -> Self {
        BasisOptions {
            hidden: 5,
            collocation: 5,
            nodes: NodeKind::Uniform,
            bounds: (-1.0, 1.0),
            seed: 0,
        }
    }
}

impl BasisOptions {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.hidden != self.collocation {
            return Err(Error::InvalidArgument(format!(
                "hidden width ({}) and collocation count ({}) must be equal and positive",
                self.hidden, self.collocation
            )));
        }
        let (lo, hi) = self.bounds;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!("invalid sampling bounds ({lo}, {hi})")));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer; combines a base seed with a stream index.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn dtanh(z: f64) -> f64 {
    let s = z.tanh();
    1.0 - s * s
}

/// A sampled inner layer together with its collocation grid and the
/// precomputed feature matrices
///
/// * `H[c, h]   = tanh(a_h t_c + b_h)`
/// * `H'[c, h]  = tanh'(a_h t_c + b_h) a_h`
/// * `H0[c, h]  = tanh(b_h)`
#[derive(Debug, Clone)]
pub struct RpnnBasis {
    a: DVector<f64>,
    b: DVector<f64>,
    sigma_b: DVector<f64>,
    grid: CollocationGrid,
    feat_h: DMatrix<f64>,
    feat_hprime: DMatrix<f64>,
    feat_h0: DMatrix<f64>,
    feat_shift: DMatrix<f64>,
    condition: f64,
    resamples: usize,
    seed: Option<u64>,
}

impl RpnnBasis {
    /// Draws `a, b ~ U(bounds)` from `opts.seed`, redrawing with derived
    /// seeds while `cond(H')` exceeds [`CONDITION_LIMIT`]. Fails only when no
    /// draw gives an invertible `H'`.
    pub fn sample(opts: &BasisOptions, dt: f64) -> Result<Self> {
        opts.validate()?;
        let grid = CollocationGrid::new(opts.nodes, opts.collocation, dt)?;
        let (lo, hi) = opts.bounds;
        let mut best: Option<RpnnBasis> = None;
        for draw in 0..MAX_DRAWS {
            let seed = if draw == 0 {
                opts.seed
            } else {
                derive_seed(opts.seed, draw as u64)
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DVector::from_fn(opts.hidden, |_, _| rng.random_range(lo..hi));
            let b = DVector::from_fn(opts.hidden, |_, _| rng.random_range(lo..hi));
            let mut basis = Self::build(a, b, grid.clone());
            basis.resamples = draw;
            basis.seed = Some(seed);
            if basis.condition <= CONDITION_LIMIT {
                if draw > 0 {
                    log::debug!("basis for dt={dt} redrawn {draw} times (cond {:e})", basis.condition);
                }
                return Ok(basis);
            }
            if best.as_ref().is_none_or(|b| basis.condition < b.condition) {
                best = Some(basis);
            }
        }
        // On short intervals every draw is ill-conditioned (the features are
        // close to polynomials in t); keep the best one as long as it is
        // invertible.
        match best {
            Some(mut basis) if basis.condition.is_finite() => {
                log::warn!(
                    "no basis for dt={dt} below cond {CONDITION_LIMIT:e} in {MAX_DRAWS} draws; using cond {:e}",
                    basis.condition
                );
                basis.resamples = MAX_DRAWS;
                Ok(basis)
            }
            best => Err(Error::ResamplingExhausted {
                attempts: MAX_DRAWS,
                condition: best.map_or(f64::INFINITY, |b| b.condition),
            }),
        }
    }

    /// A basis with given inner weights and nodes, without conditioning checks.
    pub fn from_parts(a: DVector<f64>, b: DVector<f64>, nodes: Vec<f64>, dt: f64) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::shape("inner biases", a.len(), b.len()));
        }
        if !crate::all_finite(a.as_slice()) || !crate::all_finite(b.as_slice()) {
            return Err(Error::NonFinite("inner weights"));
        }
        let grid = CollocationGrid::from_nodes(nodes, dt)?;
        Ok(Self::build(a, b, grid))
    }

    fn build(a: DVector<f64>, b: DVector<f64>, grid: CollocationGrid) -> Self {
        let h = a.len();
        let c = grid.len();
        let sigma_b = b.map(f64::tanh);
        let feat_h = DMatrix::from_fn(c, h, |i, k| (a[k] * grid.nodes[i] + b[k]).tanh());
        let feat_hprime = DMatrix::from_fn(c, h, |i, k| dtanh(a[k] * grid.nodes[i] + b[k]) * a[k]);
        let feat_h0 = DMatrix::from_fn(c, h, |_, k| sigma_b[k]);
        let feat_shift = &feat_h - &feat_h0;
        let condition = condition_number(&feat_hprime);
        RpnnBasis {
            a,
            b,
            sigma_b,
            grid,
            feat_h,
            feat_hprime,
            feat_h0,
            feat_shift,
            condition,
            resamples: 0,
            seed: None,
        }
    }

    pub fn hidden(&self) -> usize {
        self.a.len()
    }

    pub fn collocation(&self) -> usize {
        self.grid.len()
    }

    pub fn step(&self) -> f64 {
        self.grid.step
    }

    pub fn a(&self) -> &DVector<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn nodes(&self) -> &[f64] {
        &self.grid.nodes
    }

    pub fn grid(&self) -> &CollocationGrid {
        &self.grid
    }

    pub fn feat_h(&self) -> &DMatrix<f64> {
        &self.feat_h
    }

    pub fn feat_hprime(&self) -> &DMatrix<f64> {
        &self.feat_hprime
    }

    pub fn feat_h0(&self) -> &DMatrix<f64> {
        &self.feat_h0
    }

    /// `H - H0`.
    pub fn feat_shift(&self) -> &DMatrix<f64> {
        &self.feat_shift
    }

    /// 2-norm condition number of `H'`.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Number of redraws; [`MAX_DRAWS`] when no draw met the limit and the
    /// best-conditioned one was kept.
    pub fn resamples(&self) -> usize {
        self.resamples
    }

    /// Seed of the accepted draw, if the basis was sampled.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Whether every node lies strictly inside `(0, dt)`, as the step-size
    /// theory assumes.
    pub fn nodes_interior(&self) -> bool {
        self.nodes().iter().all(|&t| t > 0.0 && t < self.step())
    }

    /// `tanh(a t + b) - tanh(b)`.
    pub fn features(&self, t: f64) -> DVector<f64> {
        DVector::from_fn(self.hidden(), |k, _| {
            (self.a[k] * t + self.b[k]).tanh() - self.sigma_b[k]
        })
    }

    /// `tanh'(a t + b) * a`.
    pub fn feature_derivatives(&self, t: f64) -> DVector<f64> {
        DVector::from_fn(self.hidden(), |k, _| dtanh(self.a[k] * t + self.b[k]) * self.a[k])
    }

    fn check_weights(&self, theta: &WeightMatrix) -> Result<()> {
        if theta.nrows() != self.hidden() {
            return Err(Error::shape("weight rows", self.hidden(), theta.nrows()));
        }
        Ok(())
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::NonFinite("evaluation time"));
        }
        if t < 0.0 || t > self.step() {
            log::debug!("network evaluated outside [0, {}] at t={t}", self.step());
        }
        Ok(())
    }

    /// `N(t) = x0 + theta^T (tanh(a t + b) - tanh(b))`.
    pub fn eval(&self, theta: &WeightMatrix, x0: &State, t: f64) -> Result<State> {
        self.check_weights(theta)?;
        if theta.ncols() != x0.len() {
            return Err(Error::shape("initial state", theta.ncols(), x0.len()));
        }
        self.check_time(t)?;
        Ok(x0 + theta.tr_mul(&self.features(t)))
    }

    /// `N'(t) = theta^T (tanh'(a t + b) * a)`.
    pub fn eval_derivative(&self, theta: &WeightMatrix, t: f64) -> Result<State> {
        self.check_weights(theta)?;
        self.check_time(t)?;
        Ok(theta.tr_mul(&self.feature_derivatives(t)))
    }

    /// Upper end of the admissible step-size interval
    /// `dt < sigma_min(H') / (lip * sqrt(C) * |a|_2)`, or infinity when
    /// `lip == 0`.
    pub fn admissible_step_bound(&self, lipschitz: f64) -> Result<f64> {
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Lipschitz constant must be finite and non-negative, got {lipschitz}"
            )));
        }
        let sigma_min = self
            .feat_hprime
            .singular_values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !(sigma_min > 0.0) {
            return Err(Error::Singular("H'"));
        }
        if lipschitz == 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok(sigma_min / (lipschitz * (self.collocation() as f64).sqrt() * self.a.norm()))
    }
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Samples the basis for one interval length.
pub fn sample_basis(opts: &BasisOptions, dt: f64) -> Result<RpnnBasis> {
    RpnnBasis::sample(opts, dt)
}

pub fn eval_network(basis: &RpnnBasis, theta: &WeightMatrix, x0: &State, t: f64) -> Result<State> {
    basis.eval(theta, x0, t)
}

pub fn eval_network_derivative(basis: &RpnnBasis, theta: &WeightMatrix, t: f64) -> Result<State> {
    basis.eval_derivative(theta, t)
}

pub fn admissible_step_bound(basis: &RpnnBasis, lipschitz: f64) -> Result<f64> {
    basis.admissible_step_bound(lipschitz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_basis(node: f64, dt: f64) -> RpnnBasis {
        RpnnBasis::from_parts(DVector::from_element(1, 1.0), DVector::zeros(1), vec![node], dt).unwrap()
    }

    #[test]
    fn sampling_is_deterministic() {
        let opts = BasisOptions {
            seed: 42,
            ..Default::default()
        };
        let a = sample_basis(&opts, 0.5).unwrap();
        let b = sample_basis(&opts, 0.5).unwrap();
        assert_eq!(a.a(), b.a());
        assert_eq!(a.b(), b.b());
        assert_eq!(a.feat_hprime(), b.feat_hprime());
        let other = sample_basis(&BasisOptions { seed: 43, ..opts }, 0.5).unwrap();
        assert_ne!(a.a(), other.a());
    }

    #[test]
    fn samples_respect_bounds() {
        let opts = BasisOptions {
            bounds: (0.5, 2.0),
            seed: 7,
            ..Default::default()
        };
        let basis = sample_basis(&opts, 1.0).unwrap();
        assert!(basis
            .a()
            .iter()
            .chain(basis.b().iter())
            .all(|&v| (0.5..2.0).contains(&v)));
    }

    #[test]
    fn feature_matrices_recompute() {
        let basis = sample_basis(&BasisOptions::default(), 0.3).unwrap();
        for (c, &t) in basis.nodes().iter().enumerate() {
            for h in 0..basis.hidden() {
                let z = basis.a()[h] * t + basis.b()[h];
                assert_abs_diff_eq!(basis.feat_h()[(c, h)], z.tanh(), epsilon = 1e-14);
                assert_abs_diff_eq!(
                    basis.feat_hprime()[(c, h)],
                    (1.0 - z.tanh().powi(2)) * basis.a()[h],
                    epsilon = 1e-14
                );
                assert_eq!(basis.feat_h0()[(c, h)], basis.b()[h].tanh());
            }
        }
    }

    #[test]
    fn single_neuron_hand_values() {
        let dt: f64 = 0.5;
        let basis = unit_basis(dt, dt);
        assert_abs_diff_eq!(basis.feat_hprime()[(0, 0)], 1.0 - dt.tanh().powi(2), epsilon = 1e-15);

        let theta = DMatrix::from_element(1, 1, 2.0);
        let x0 = DVector::from_element(1, 1.5);
        let value = basis.eval(&theta, &x0, 0.3).unwrap();
        assert_abs_diff_eq!(value[0], 1.5 + 2.0 * 0.3f64.tanh(), epsilon = 1e-15);
        let deriv = basis.eval_derivative(&theta, 0.3).unwrap();
        assert_abs_diff_eq!(deriv[0], 2.0 * (1.0 - 0.3f64.tanh().powi(2)), epsilon = 1e-15);
    }

    #[test]
    fn initial_condition_is_exact() {
        let basis = sample_basis(
            &BasisOptions {
                seed: 3,
                ..Default::default()
            },
            0.7,
        )
        .unwrap();
        let theta = DMatrix::from_fn(5, 3, |i, j| (i as f64 - 2.0) * 10.0 + j as f64 * 0.37);
        let x0 = DVector::from_vec(vec![0.1, -3.0, 1e5]);
        assert_eq!(basis.eval(&theta, &x0, 0.0).unwrap(), x0);
        let zero = DMatrix::zeros(5, 3);
        for t in [0.1, 0.35, 0.7] {
            assert_eq!(basis.eval(&zero, &x0, t).unwrap(), x0);
            assert!(basis.eval_derivative(&zero, t).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let basis = sample_basis(&BasisOptions::default(), 1.0).unwrap();
        let theta = DMatrix::zeros(4, 2);
        assert!(basis.eval(&theta, &DVector::zeros(2), 0.5).is_err());
        assert!(basis.eval(&DMatrix::zeros(5, 2), &DVector::zeros(3), 0.5).is_err());
    }

    #[test]
    fn step_bound_hand_value() {
        let basis = unit_basis(0.1, 0.2);
        let bound = basis.admissible_step_bound(1.0).unwrap();
        assert_abs_diff_eq!(bound, 1.0 - 0.1f64.tanh().powi(2), epsilon = 1e-15);
        assert_abs_diff_eq!(bound, 0.990066, epsilon = 1e-6);
        assert_eq!(basis.admissible_step_bound(0.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn step_bound_scales_inversely() {
        let basis = sample_basis(
            &BasisOptions {
                seed: 11,
                ..Default::default()
            },
            0.5,
        )
        .unwrap();
        let one = basis.admissible_step_bound(1.5).unwrap();
        let two = basis.admissible_step_bound(3.0).unwrap();
        assert_abs_diff_eq!(one / two, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn unequal_widths_rejected() {
        let opts = BasisOptions {
            hidden: 4,
            ..Default::default()
        };
        assert!(sample_basis(&opts, 1.0).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..100).map(|k| derive_seed(5, k)).collect();
        assert_eq!(seeds.len(), 100);
    }
}
