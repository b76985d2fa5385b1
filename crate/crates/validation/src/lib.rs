//! Reporting helpers for the acceptance suite in `tests/acceptance.rs`.
//!
//! Each criterion is a closure returning [`Check`]; [`Suite::run`] times it
//! and prints one PASS/FAIL line.

use std::time::{Duration, Instant};

/// `Ok(detail)` on success, `Err(detail)` on failure.
pub type Check = Result<String, String>;

#[derive(Debug, Default)]
pub struct Suite {
    pub failures: usize,
}

impl Suite {
    /// Runs one criterion; exceeding `budget` turns a pass into a failure.
    pub fn run(&mut self, id: &str, name: &str, budget: Option<Duration>, check: impl FnOnce() -> Check) -> bool {
        let started = Instant::now();
        let outcome = check();
        let elapsed = started.elapsed();
        let over = budget.is_some_and(|b| elapsed > b);
        let budget_text = budget.map_or("subsumed".to_string(), |b| format!("budget {}s", b.as_secs()));
        let (pass, detail) = match outcome {
            Ok(d) if over => (false, format!("{d}; over runtime budget")),
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        if !pass {
            self.failures += 1;
        }
        println!("{}", line(pass, id, name, elapsed, &budget_text, &detail));
        pass
    }
}

fn line(pass: bool, id: &str, name: &str, elapsed: Duration, budget: &str, detail: &str) -> String {
    format!(
        "{} [{id}] {name} ({:.2}s, {budget}): {detail}",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    )
}

pub fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

pub fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}
