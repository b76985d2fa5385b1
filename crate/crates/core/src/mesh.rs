use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Ordered node times `t_0 < t_1 < ... < t_N` with their interval lengths.
///
/// Interval lengths are stored as given rather than recomputed from node
/// differences, so a uniform mesh with `dt = T/N` hands exactly `dt` to the
/// fine propagator on every interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeMesh {
    nodes: Vec<f64>,
    steps: Vec<f64>,
}

impl TimeMesh {
    /// `intervals` equal steps covering `[start, end]`.
    pub fn uniform(start: f64, end: f64, intervals: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::InvalidArgument("mesh needs at least one interval".into()));
        }
        if !(start.is_finite() && end.is_finite() && end > start) {
            return Err(Error::InvalidArgument(format!("invalid mesh range [{start}, {end}]")));
        }
        let step = (end - start) / intervals as f64;
        Self::from_blocks(start, &[(intervals, step)])
    }

    /// Concatenated blocks of `(count, step)` uniform intervals starting at `start`.
    pub fn from_blocks(start: f64, blocks: &[(usize, f64)]) -> Result<Self> {
        let mut steps = Vec::new();
        for &(count, step) in blocks {
            if !(step.is_finite() && step > 0.0) {
                return Err(Error::InvalidArgument(format!("invalid mesh step {step}")));
            }
            steps.extend(std::iter::repeat_n(step, count));
        }
        if steps.is_empty() {
            return Err(Error::InvalidArgument("mesh needs at least one interval".into()));
        }
        let mut nodes = Vec::with_capacity(steps.len() + 1);
        nodes.push(start);
        // Within a block, node k is start_of_block + k * step (no accumulated drift).
        let mut block_start = start;
        for &(count, step) in blocks {
            for k in 1..=count {
                nodes.push(block_start + k as f64 * step);
            }
            block_start = *nodes.last().unwrap();
        }
        Self::check(nodes, steps)
    }

    /// Mesh from explicit node times; interval lengths are node differences.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidArgument("mesh needs at least two nodes".into()));
        }
        let steps = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        Self::check(nodes, steps)
    }

    fn check(nodes: Vec<f64>, steps: Vec<f64>) -> Result<Self> {
        if !nodes.iter().all(|t| t.is_finite()) {
            return Err(Error::NonFinite("mesh nodes"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) || steps.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidArgument("mesh nodes must be strictly increasing".into()));
        }
        Ok(TimeMesh { nodes, steps })
    }

    /// Number of intervals `N`.
    pub fn intervals(&self) -> usize {
        self.steps.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn step(&self, n: usize) -> f64 {
        self.steps[n]
    }

    pub fn start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Index `n` of the interval `[t_n, t_{n+1})` containing `t`; the final
    /// node belongs to the last interval.
    pub fn locate(&self, t: f64) -> Option<usize> {
        if !(t >= self.start() && t <= self.end()) {
            return None;
        }
        let n = self.nodes.partition_point(|&node| node <= t);
        Some(n.saturating_sub(1).min(self.intervals() - 1))
    }
}
