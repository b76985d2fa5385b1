//! Right-hand sides of autonomous ODE systems `x' = F(x)` together with their
//! analytic Jacobians, and the fully parameterized benchmark suite.

mod benchmarks;
mod burgers;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::{all_finite, Error, Result, State};

pub use benchmarks::{Affine, Arenstorf, Brusselator, Lorenz, Rober, Sir, ARENSTORF_INITIAL_VELOCITY};
pub use burgers::{burgers_semidiscretize, BurgersDiscretization, BurgersProfile};

/// An autonomous vector field with an analytic Jacobian.
///
/// Implementations write into caller-provided buffers and must not allocate on
/// the hot path; they are called millions of times by the fine integrators.
pub trait VectorField: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64], out: &mut [f64]);

    /// Writes `DF(x)` into `out` (overwriting every entry).
    fn jacobian(&self, x: &[f64], out: &mut DMatrix<f64>);

    /// Human-readable component labels, used for CSV headers.
    fn component_names(&self) -> Vec<String> {
        (1..=self.dim()).map(|i| format!("x{i}")).collect()
    }
}

/// Identifier of one of the six benchmark systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Sir,
    Rober,
    Lorenz,
    Arenstorf,
    Brusselator,
    Burgers,
}

impl Benchmark {
    pub const ALL: [Benchmark; 6] = [
        Benchmark::Sir,
        Benchmark::Rober,
        Benchmark::Lorenz,
        Benchmark::Arenstorf,
        Benchmark::Brusselator,
        Benchmark::Burgers,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Benchmark::Sir => "sir",
            Benchmark::Rober => "rober",
            Benchmark::Lorenz => "lorenz",
            Benchmark::Arenstorf => "arenstorf",
            Benchmark::Brusselator => "brusselator",
            Benchmark::Burgers => "burgers",
        }
    }

    /// Initial condition used by the reference experiments. Burgers uses the
    /// `sin(2 pi x)` profile on the default grid.
    pub fn default_initial_state(self) -> State {
        match self {
            Benchmark::Sir => DVector::from_vec(vec![0.3, 0.5, 0.2]),
            Benchmark::Rober => DVector::from_vec(vec![1.0, 0.0, 0.0]),
            Benchmark::Lorenz => DVector::from_vec(vec![20.0, 5.0, -5.0]),
            Benchmark::Arenstorf => DVector::from_vec(vec![0.994, 0.0, 0.0, ARENSTORF_INITIAL_VELOCITY]),
            Benchmark::Brusselator => DVector::from_vec(vec![0.0, 1.0]),
            Benchmark::Burgers => BurgersProfile::Sine.sample(burgers::DEFAULT_GRID_SIZE),
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Benchmark::ALL
            .into_iter()
            .find(|b| b.id() == s)
            .ok_or_else(|| Error::UnknownBenchmark(s.to_string()))
    }
}

/// An ODE system: dimension, vector field, Jacobian, name and parameters.
///
/// Immutable once built and cheap to clone; the field is shared behind an
/// `Arc` so the same system can be evaluated from many threads.
#[derive(Clone)]
pub struct OdeSystem {
    name: String,
    params: Vec<(String, f64)>,
    field: Arc<dyn VectorField>,
    burgers: Option<Arc<BurgersDiscretization>>,
}

impl fmt::Debug for OdeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdeSystem")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("params", &self.params)
            .finish()
    }
}

impl OdeSystem {
    pub fn new(name: impl Into<String>, params: Vec<(String, f64)>, field: Arc<dyn VectorField>) -> Self {
        OdeSystem {
            name: name.into(),
            params,
            field,
            burgers: None,
        }
    }

    pub(crate) fn from_burgers(disc: BurgersDiscretization) -> Self {
        let disc = Arc::new(disc);
        OdeSystem {
            name: "burgers".into(),
            params: vec![
                ("nu".into(), disc.viscosity()),
                ("grid_size".into(), disc.grid_size() as f64),
            ],
            field: disc.clone(),
            burgers: Some(disc),
        }
    }

    /// Linear field `x' = A x`.
    pub fn linear(matrix: DMatrix<f64>) -> Self {
        let offset = DVector::zeros(matrix.nrows());
        Self::affine(matrix, offset)
    }

    /// Affine field `x' = A x + c`; covers the zero and constant fields too.
    pub fn affine(matrix: DMatrix<f64>, offset: DVector<f64>) -> Self {
        OdeSystem::new("affine", Vec::new(), Arc::new(Affine::new(matrix, offset)))
    }

    /// Scalar test equation `x' = lambda x`.
    pub fn scalar_linear(lambda: f64) -> Self {
        let mut sys = Self::linear(DMatrix::from_element(1, 1, lambda));
        sys.name = "scalar-linear".into();
        sys.params = vec![("lambda".into(), lambda)];
        sys
    }

    /// Constant field `x' = c`.
    pub fn constant(offset: DVector<f64>) -> Self {
        let d = offset.len();
        let mut sys = Self::affine(DMatrix::zeros(d, d), offset);
        sys.name = "constant".into();
        sys
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    pub fn component_names(&self) -> Vec<String> {
        self.field.component_names()
    }

    /// The Burgers stencil when this system is the semi-discretized Burgers
    /// equation; the trainer then switches to the matrix-free Jacobian.
    pub fn burgers(&self) -> Option<&BurgersDiscretization> {
        self.burgers.as_deref()
    }

    /// Unchecked evaluation into a buffer, for inner loops.
    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        self.field.eval(x, out);
    }

    /// Unchecked Jacobian into a buffer, for inner loops.
    #[inline]
    pub fn jacobian_into(&self, x: &[f64], out: &mut DMatrix<f64>) {
        self.field.jacobian(x, out);
    }

    pub fn eval_field(&self, x: &State) -> Result<State> {
        self.check_state(x)?;
        let mut out = DVector::zeros(self.dim());
        self.field.eval(x.as_slice(), out.as_mut_slice());
        if !all_finite(out.as_slice()) {
            return Err(Error::NonFinite("vector field output"));
        }
        Ok(out)
    }

    pub fn eval_jacobian(&self, x: &State) -> Result<DMatrix<f64>> {
        self.check_state(x)?;
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        self.field.jacobian(x.as_slice(), &mut out);
        if !all_finite(out.as_slice()) {
            return Err(Error::NonFinite("Jacobian output"));
        }
        Ok(out)
    }

    fn check_state(&self, x: &State) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::shape("state", self.dim(), x.len()));
        }
        if !all_finite(x.as_slice()) {
            return Err(Error::NonFinite("state"));
        }
        Ok(())
    }
}

/// Builds a benchmark system with its default parameters, then applies
/// `overrides` by parameter name.
pub fn make_benchmark(name: &str, overrides: &[(String, f64)]) -> Result<OdeSystem> {
    let bench: Benchmark = name.parse()?;
    for (key, value) in overrides {
        if !value.is_finite() {
            return Err(Error::NonFinite("parameter override"));
        }
        if !benchmarks::parameter_names(bench).contains(&key.as_str()) {
            return Err(Error::UnknownParameter {
                system: bench.id().to_string(),
                name: key.clone(),
            });
        }
    }
    let get = |key: &str, default: f64| {
        overrides
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map_or(default, |(_, v)| *v)
    };

    let system = match bench {
        Benchmark::Sir => Sir::new(get("beta", 0.1), get("gamma", 0.1)).into_system(),
        Benchmark::Rober => Rober::new(get("k1", 0.04), get("k2", 3e7), get("k3", 1e4)).into_system(),
        Benchmark::Lorenz => Lorenz::new(get("sigma", 10.0), get("r", 28.0), get("b", 8.0 / 3.0)).into_system(),
        Benchmark::Arenstorf => Arenstorf::new(get("a", benchmarks::ARENSTORF_A)).into_system(),
        Benchmark::Brusselator => Brusselator::new(get("A", 1.0), get("B", 3.0)).into_system(),
        Benchmark::Burgers => {
            let grid = get("grid_size", burgers::DEFAULT_GRID_SIZE as f64);
            if grid.fract() != 0.0 || grid < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "grid_size must be a non-negative integer, got {grid}"
                )));
            }
            burgers_semidiscretize(grid as usize, get("nu", burgers::DEFAULT_VISCOSITY))?.0
        }
    };
    Ok(system)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> State {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn sir_field_hand_value() {
        let sys = make_benchmark("sir", &[]).unwrap();
        let f = sys.eval_field(&v(&[0.3, 0.5, 0.2])).unwrap();
        assert_abs_diff_eq!(f[0], -0.015, epsilon = 1e-15);
        assert_abs_diff_eq!(f[1], -0.035, epsilon = 1e-15);
        assert_abs_diff_eq!(f[2], 0.05, epsilon = 1e-15);
    }

    #[test]
    fn sir_jacobian_entry() {
        let sys = make_benchmark("sir", &[]).unwrap();
        let j = sys.eval_jacobian(&v(&[0.3, 0.5, 0.2])).unwrap();
        assert_abs_diff_eq!(j[(0, 0)], -0.05, epsilon = 1e-15);
    }

    #[test]
    fn lorenz_origin_is_equilibrium() {
        let sys = make_benchmark("lorenz", &[]).unwrap();
        let f = sys.eval_field(&v(&[0.0, 0.0, 0.0])).unwrap();
        assert_eq!(f.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn linear_jacobian_is_constant() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let sys = OdeSystem::linear(a.clone());
        for x in [[0.0, 0.0], [1.0, -4.0], [1e3, 2.5]] {
            assert_eq!(sys.eval_jacobian(&v(&x)).unwrap(), a);
        }
    }

    #[test]
    fn overrides_and_errors() {
        let sys = make_benchmark("sir", &[("beta".into(), 0.5)]).unwrap();
        assert_eq!(sys.param("beta"), Some(0.5));
        assert_eq!(sys.param("gamma"), Some(0.1));

        assert!(matches!(
            make_benchmark("vanderpol", &[]),
            Err(Error::UnknownBenchmark(_))
        ));
        assert!(matches!(
            make_benchmark("lorenz", &[("beta".into(), 1.0)]),
            Err(Error::UnknownParameter { .. })
        ));
        assert!(matches!(
            make_benchmark("rober", &[("k1".into(), f64::NAN)]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn defaults_match_reference_setups() {
        let rober = make_benchmark("rober", &[]).unwrap();
        assert_eq!(rober.param("k1"), Some(0.04));
        assert_eq!(rober.param("k2"), Some(3e7));
        assert_eq!(rober.param("k3"), Some(1e4));
        let lorenz = make_benchmark("lorenz", &[]).unwrap();
        assert_eq!(lorenz.param("b"), Some(8.0 / 3.0));
        let aren = make_benchmark("arenstorf", &[]).unwrap();
        assert_eq!(aren.param("a"), Some(0.12277471));
        assert_eq!(aren.param("b"), Some(1.0 - 0.12277471));
        assert_eq!(aren.component_names(), ["x1", "x2", "v1", "v2"]);
        let bru = make_benchmark("brusselator", &[]).unwrap();
        assert_eq!(bru.param("A"), Some(1.0));
        assert_eq!(bru.param("B"), Some(3.0));
        let burgers = make_benchmark("burgers", &[]).unwrap();
        assert_eq!(burgers.dim(), 51);
        assert_eq!(burgers.param("nu"), Some(1.0 / 50.0));
    }

    #[test]
    fn non_finite_state_rejected() {
        let sys = make_benchmark("sir", &[]).unwrap();
        assert!(sys.eval_jacobian(&v(&[f64::INFINITY, 0.0, 0.0])).is_err());
        assert!(sys.eval_field(&v(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn benchmark_ids_round_trip() {
        for b in Benchmark::ALL {
            assert_eq!(b.id().parse::<Benchmark>().unwrap(), b);
            assert_eq!(
                b.default_initial_state().len(),
                make_benchmark(b.id(), &[]).unwrap().dim()
            );
        }
    }
}
