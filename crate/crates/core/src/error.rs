use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),
    #[error("system `{system}` has no parameter `{name}`")]
    UnknownParameter { system: String, name: String },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("explicit step failed: stage {stage} produced a non-finite value")]
    StepFailure { stage: usize },
    #[error("Newton iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NewtonNonConvergence { iterations: usize, residual: f64 },
    #[error("interval length {length} is not an integer multiple of the fine step {step}")]
    StepCount { length: f64, step: f64 },
    #[error("interval {index}: {source}")]
    Interval {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("no well-conditioned basis after {attempts} draws (last condition number {condition:e})")]
    ResamplingExhausted { attempts: usize, condition: f64 },
    #[error("singular matrix: {0}")]
    Singular(&'static str),
    #[error("damped linear solve failed with damping above {lambda_max:e}")]
    LinearSolve { lambda_max: f64 },
    #[error("training failed at iteration {iteration}, interval {interval}: {source}")]
    Training {
        iteration: usize,
        interval: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("fine propagation failed at iteration {iteration}, interval {interval}: {source}")]
    FineStep {
        iteration: usize,
        interval: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("time {t} outside [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn shape(what: &'static str, expected: usize, found: usize) -> Self {
        Error::ShapeMismatch { what, expected, found }
    }

    /// Innermost cause, skipping interval/iteration context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Interval { source, .. } | Error::Training { source, .. } | Error::FineStep { source, .. } => {
                source.root()
            }
            other => other,
        }
    }
}
