//! The fine sweep: independent fine propagations over all intervals.

use serde::{Deserialize, Serialize};

use crate::integrators::{fine_propagate, FineMethod};
use crate::problems::OdeSystem;
use crate::{Error, Result, State};

/// How the fine sweep is executed. Without the `parallel` feature both modes
/// run sequentially.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    Sequential,
    #[default]
    Parallel,
}

/// Propagates `starts[n]` over `steps[n]` for every `n`. Results are collected
/// in index order; on failure the lowest failing index is reported.
pub(crate) fn fine_sweep(
    system: &OdeSystem,
    starts: &[State],
    steps: &[f64],
    method: &FineMethod,
    mode: SweepMode,
) -> Result<Vec<State>, (usize, Error)> {
    let task = |n: usize| fine_propagate(system, &starts[n], steps[n], method).map_err(|e| (n, e));
    match mode {
        #[cfg(feature = "parallel")]
        SweepMode::Parallel => {
            use rayon::prelude::*;
            let results: Vec<_> = (0..steps.len()).into_par_iter().map(task).collect();
            results.into_iter().collect()
        }
        _ => (0..steps.len()).map(task).collect(),
    }
}

/// Runs `f` on a dedicated pool of `workers` threads (`0` keeps the global
/// pool). Without the `parallel` feature `f` just runs on the caller.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    #[cfg(feature = "parallel")]
    {
        if workers == 0 {
            return Ok(f());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        Ok(f())
    }
}
