//! Wall-clock statistics over repeated runs.

use std::time::Instant;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Population standard deviation.
    pub stddev: f64,
    pub samples: usize,
}

impl TimingStats {
    /// Statistics of `samples` seconds. Panics on an empty slice.
    pub fn from_samples(samples: &[f64]) -> Self {
        assert!(!samples.is_empty(), "no timing samples");
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        TimingStats {
            // Summation can push the mean a rounding error outside the range.
            mean: mean.clamp(
                samples.iter().copied().fold(f64::INFINITY, f64::min),
                samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
            min: samples.iter().copied().fold(f64::INFINITY, f64::min),
            max: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            stddev: var.sqrt(),
            samples: samples.len(),
        }
    }
}

/// Runs `task` once as a warm-up, then `repeats` timed times.
pub fn timing_harness<T>(mut task: impl FnMut() -> T, repeats: usize) -> TimingStats {
    let repeats = repeats.max(1);
    std::hint::black_box(task());
    let samples: Vec<f64> = (0..repeats)
        .map(|_| {
            let started = Instant::now();
            std::hint::black_box(task());
            started.elapsed().as_secs_f64()
        })
        .collect();
    TimingStats::from_samples(&samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[test]
    fn single_repeat() {
        let s = timing_harness(|| 1 + 1, 1);
        assert_eq!(s.mean, s.min);
        assert_eq!(s.mean, s.max);
        assert_eq!(s.stddev, 0.0);
    }

    #[test]
    fn warm_up_is_excluded() {
        let mut calls = 0;
        let s = timing_harness(|| calls += 1, 3);
        assert_eq!(calls, 4);
        assert_eq!(s.samples, 3);
    }

    #[test]
    fn sleep_duration() {
        let s = timing_harness(|| std::thread::sleep(Duration::from_millis(20)), 5);
        assert!(s.min <= s.mean && s.mean <= s.max);
        assert!((s.mean - 0.02).abs() <= 0.2 * 0.02, "{s:?}");
    }

    #[test]
    fn sample_statistics() {
        let s = TimingStats::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 4.0);
        assert!((s.stddev - 1.25f64.sqrt()).abs() < 1e-15);
    }
}
