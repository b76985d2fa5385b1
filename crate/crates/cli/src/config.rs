//! Experiment configuration.
//!
//! A config starts from the defaults of its benchmark; a JSON file only needs
//! the fields it changes, and command-line flags override both.

use std::collections::BTreeMap;
use std::path::PathBuf;

use parareal_core::collocation::LmOptions;
use parareal_core::integrators::FineMethod;
use parareal_core::problems::{make_benchmark, Benchmark, BurgersProfile, OdeSystem};
use parareal_core::rpnn::BasisOptions;
use parareal_core::{State, SweepMode, TimeMesh};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::RunError;

/// Arenstorf orbit period.
pub const ARENSTORF_PERIOD: f64 = 17.065_216_560_157_96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeshSpec {
    /// `intervals` equal steps over `[0, t_end]`.
    Uniform { intervals: usize },
    /// Consecutive runs of equal steps, e.g. 100 steps of 0.01 then 33 of 3.
    Blocks { blocks: Vec<MeshBlock> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshBlock {
    pub intervals: usize,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialCondition {
    /// The benchmark's reference initial state.
    #[default]
    Default,
    State(Vec<f64>),
    /// A Burgers profile sampled on the configured grid.
    BurgersProfile(BurgersProfile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: Benchmark,
    /// Parameter overrides by name, e.g. `{"beta": 0.2}`.
    pub params: BTreeMap<String, f64>,
    pub initial: InitialCondition,
    pub t_end: f64,
    pub mesh: MeshSpec,
    pub fine: FineMethod,
    pub rpnn: BasisOptions,
    pub lm: LmOptions,
    pub tol: f64,
    pub max_it: usize,
    /// Number of timed solves; the artifacts come from the first.
    pub repeats: usize,
    /// Reuse `rpnn.seed` for every repeat instead of deriving fresh seeds.
    pub pin_seed: bool,
    /// Worker threads for the fine sweep; 0 uses all cores.
    pub workers: usize,
    pub sweep: SweepMode,
    /// Samples in `dense.csv`.
    pub dense_samples: usize,
    pub out: PathBuf,
    pub certify: bool,
    pub trace: bool,
}

impl ExperimentConfig {
    /// Reference setup of a benchmark.
    pub fn defaults(benchmark: Benchmark) -> Self {
        let (t_end, mesh, fine) = match benchmark {
            // No final time is given for SIR; ten unit intervals is our choice.
            Benchmark::Sir => (10.0, MeshSpec::Uniform { intervals: 10 }, FineMethod::rk4(1e-2)),
            Benchmark::Rober => (
                100.0,
                MeshSpec::Blocks {
                    blocks: vec![
                        MeshBlock {
                            intervals: 100,
                            step: 1e-2,
                        },
                        MeshBlock {
                            intervals: 33,
                            step: 3.0,
                        },
                    ],
                },
                FineMethod::implicit_euler(1e-4),
            ),
            Benchmark::Lorenz => (
                10.0,
                MeshSpec::Uniform { intervals: 250 },
                FineMethod::rk4(10.0 / 14500.0),
            ),
            Benchmark::Arenstorf => (
                ARENSTORF_PERIOD,
                MeshSpec::Uniform { intervals: 125 },
                FineMethod::rk4(ARENSTORF_PERIOD / 80000.0),
            ),
            Benchmark::Brusselator => (12.0, MeshSpec::Uniform { intervals: 32 }, FineMethod::rk4(12.0 / 640.0)),
            Benchmark::Burgers => (
                1.0,
                MeshSpec::Uniform { intervals: 50 },
                FineMethod::implicit_euler(1.0 / 500.0),
            ),
        };
        ExperimentConfig {
            benchmark,
            params: BTreeMap::new(),
            initial: InitialCondition::Default,
            t_end,
            mesh,
            fine,
            rpnn: BasisOptions::default(),
            lm: LmOptions::default(),
            tol: 1e-4,
            max_it: 20,
            repeats: 1,
            pin_seed: false,
            workers: 0,
            sweep: SweepMode::default(),
            dense_samples: 1000,
            out: PathBuf::from("out").join(benchmark.id()),
            certify: false,
            trace: false,
        }
    }

    /// Parses a JSON document on top of the defaults of its benchmark.
    /// `benchmark` wins over the document's own `benchmark` field.
    pub fn from_json(text: &str, benchmark: Option<Benchmark>) -> Result<Self, RunError> {
        let doc: Value = serde_json::from_str(text).map_err(|e| RunError::Config(format!("invalid JSON: {e}")))?;
        if !doc.is_object() {
            return Err(RunError::Config("config must be a JSON object".into()));
        }
        let bench = match benchmark {
            Some(b) => b,
            None => {
                let field = doc
                    .get("benchmark")
                    .ok_or_else(|| RunError::Config("config names no benchmark".into()))?;
                serde_json::from_value(field.clone()).map_err(|e| RunError::Config(format!("benchmark: {e}")))?
            }
        };
        let mut merged = serde_json::to_value(Self::defaults(bench)).expect("config serializes");
        // Enum-valued fields name their variant as the key, so a given value
        // replaces the default instead of merging into it.
        for key in ["mesh", "initial"] {
            if let Some(value) = doc.get(key) {
                merged[key] = value.clone();
            }
        }
        merge(&mut merged, doc);
        merged["benchmark"] = serde_json::to_value(bench).expect("benchmark serializes");
        let config: Self = serde_json::from_value(merged).map_err(|e| RunError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |msg: String| Err(RunError::Config(msg));
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_it == 0 {
            return bad("max_it must be at least 1".into());
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if self.dense_samples < 2 {
            return bad("dense_samples must be at least 2".into());
        }
        if let MeshSpec::Blocks { blocks } = &self.mesh {
            let end: f64 = blocks.iter().map(|b| b.intervals as f64 * b.step).sum();
            if (end - self.t_end).abs() > 1e-9 * self.t_end {
                return bad(format!("mesh blocks end at {end}, not at t_end = {}", self.t_end));
            }
        }
        if matches!(self.initial, InitialCondition::BurgersProfile(_)) && self.benchmark != Benchmark::Burgers {
            return bad("a Burgers profile needs the burgers benchmark".into());
        }
        self.fine.validate().map_err(config_error)?;
        self.rpnn.validate().map_err(config_error)?;
        self.lm.validate().map_err(config_error)?;
        let system = self.system()?;
        self.initial_state(&system)?;
        let mesh = self.mesh()?;
        for &dt in mesh.steps() {
            self.fine.steps_for(dt).map_err(config_error)?;
        }
        Ok(())
    }

    pub fn system(&self) -> Result<OdeSystem, RunError> {
        let overrides: Vec<(String, f64)> = self.params.iter().map(|(k, v)| (k.clone(), *v)).collect();
        make_benchmark(self.benchmark.id(), &overrides).map_err(config_error)
    }

    pub fn mesh(&self) -> Result<TimeMesh, RunError> {
        match &self.mesh {
            MeshSpec::Uniform { intervals } => TimeMesh::uniform(0.0, self.t_end, *intervals),
            MeshSpec::Blocks { blocks } => {
                let blocks: Vec<(usize, f64)> = blocks.iter().map(|b| (b.intervals, b.step)).collect();
                TimeMesh::from_blocks(0.0, &blocks)
            }
        }
        .map_err(config_error)
    }

    pub fn initial_state(&self, system: &OdeSystem) -> Result<State, RunError> {
        let x0 = match &self.initial {
            InitialCondition::Default if self.benchmark == Benchmark::Burgers => {
                BurgersProfile::Sine.sample(system.dim())
            }
            InitialCondition::Default => self.benchmark.default_initial_state(),
            InitialCondition::State(values) => State::from_column_slice(values),
            InitialCondition::BurgersProfile(profile) => profile.sample(system.dim()),
        };
        if x0.len() != system.dim() {
            return Err(RunError::Config(format!(
                "initial state has {} components, the system has {}",
                x0.len(),
                system.dim()
            )));
        }
        Ok(x0)
    }
}

fn config_error(e: parareal_core::Error) -> RunError {
    RunError::Config(e.to_string())
}

/// Recursively overlays `patch` onto `base`; objects merge key by key, any
/// other value replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(base), Value::Object(patch)) => {
            for (key, value) in patch {
                match base.get_mut(&key) {
                    Some(slot) if slot.is_object() && value.is_object() => merge(slot, value),
                    _ => {
                        base.insert(key, value);
                    }
                }
            }
        }
        (base, patch) => *base = patch,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        for bench in Benchmark::ALL {
            let config = ExperimentConfig::defaults(bench);
            config.validate().unwrap();
            let system = config.system().unwrap();
            let mesh = config.mesh().unwrap();
            config.initial_state(&system).unwrap();
            for &dt in mesh.steps() {
                config.fine.steps_for(dt).unwrap();
            }
        }
    }

    #[test]
    fn rober_mesh_ends_at_100() {
        let mesh = ExperimentConfig::defaults(Benchmark::Rober).mesh().unwrap();
        assert_eq!(mesh.intervals(), 133);
        assert!((mesh.end() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn partial_document_keeps_defaults() {
        let config =
            ExperimentConfig::from_json(r#"{"benchmark": "sir", "tol": 1e-6, "rpnn": {"seed": 9}}"#, None).unwrap();
        assert_eq!(config.tol, 1e-6);
        assert_eq!(config.rpnn.seed, 9);
        assert_eq!(config.rpnn.hidden, 5);
        assert_eq!(config.fine, FineMethod::rk4(1e-2));
    }

    #[test]
    fn flag_benchmark_wins() {
        let config = ExperimentConfig::from_json(r#"{"benchmark": "sir"}"#, Some(Benchmark::Lorenz)).unwrap();
        assert_eq!(config.benchmark, Benchmark::Lorenz);
        assert_eq!(config.t_end, 10.0);
    }

    #[test]
    fn rejects_bad_documents() {
        for text in [
            "[1, 2]",
            "{}",
            r#"{"benchmark": "nope"}"#,
            r#"{"benchmark": "sir", "tolerance": 1}"#,
            r#"{"benchmark": "sir", "tol": -1}"#,
            r#"{"benchmark": "sir", "params": {"delta": 1}}"#,
            r#"{"benchmark": "sir", "initial": {"state": [1, 2]}}"#,
            r#"{"benchmark": "sir", "mesh": {"blocks": {"blocks": [{"intervals": 2, "step": 1}]}}}"#,
            r#"{"benchmark": "sir", "initial": {"burgers-profile": "waves"}}"#,
            r#"{"benchmark": "sir", "fine": {"kind": "rk4", "step": 0.3}}"#,
        ] {
            let err = ExperimentConfig::from_json(text, None).unwrap_err();
            assert!(matches!(err, RunError::Config(_)), "{text}: {err:?}");
        }
    }

    #[test]
    fn mesh_variant_replaces_default() {
        let config = ExperimentConfig::from_json(
            r#"{"benchmark": "rober", "t_end": 1.0, "mesh": {"uniform": {"intervals": 4}}}"#,
            None,
        )
        .unwrap();
        assert_eq!(config.mesh, MeshSpec::Uniform { intervals: 4 });
    }

    #[test]
    fn json_round_trip() {
        let mut config = ExperimentConfig::defaults(Benchmark::Burgers);
        config.initial = InitialCondition::BurgersProfile(BurgersProfile::Waves);
        config.params.insert("nu".into(), 0.1 + 0.2);
        let back = ExperimentConfig::from_json(&config.to_json(), None).unwrap();
        assert_eq!(back, config);
    }
}
