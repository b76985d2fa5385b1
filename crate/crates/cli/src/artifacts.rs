//! CSV and JSON output files.
//!
//! Floats are written with 17 significant digits so that parsing a file gives
//! back the exact in-memory values.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use parareal_core::State;
use serde::Serialize;

use crate::compare::Comparison;

/// An extra column derived from one state component, e.g. ROBER's `x2`
/// scaled by 1e4 for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledColumn {
    pub name: String,
    pub component: usize,
    pub factor: f64,
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn state_header(names: &[String], scaled: &[ScaledColumn]) -> String {
    let mut header = String::from("t");
    for name in names
        .iter()
        .map(String::as_str)
        .chain(scaled.iter().map(|s| s.name.as_str()))
    {
        header.push(',');
        header.push_str(name);
    }
    header
}

fn state_row(t: f64, x: &State, scaled: &[ScaledColumn]) -> String {
    let mut row = format_float(t);
    for v in x
        .iter()
        .copied()
        .chain(scaled.iter().map(|s| s.factor * x[s.component]))
    {
        row.push(',');
        row.push_str(&format_float(v));
    }
    row
}

/// `t,x1,...,xd[,scaled...]`, one row per time.
pub fn write_states(
    path: &Path,
    names: &[String],
    scaled: &[ScaledColumn],
    times: &[f64],
    states: &[State],
) -> io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{}", state_header(names, scaled))?;
    for (t, x) in times.iter().zip(states) {
        writeln!(out, "{}", state_row(*t, x, scaled))?;
    }
    out.flush()
}

/// `iteration,stopping_error`, iterations counted from 1.
pub fn write_errors(path: &Path, history: &[f64]) -> io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "iteration,stopping_error")?;
    for (i, e) in history.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, format_float(*e))?;
    }
    out.flush()
}

/// `node,t,euclidean,max_abs`.
pub fn write_comparison(path: &Path, times: &[f64], cmp: &Comparison) -> io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "node,t,euclidean,max_abs")?;
    for (n, row) in cmp.rows.iter().enumerate() {
        writeln!(
            out,
            "{n},{},{},{}",
            format_float(times[n]),
            format_float(row.euclidean),
            format_float(row.max_abs)
        )?;
    }
    out.flush()
}

/// `iteration,node,t,x1,...,xd` for every recorded iterate (0 is the zeroth
/// sweep).
pub fn write_trace(path: &Path, names: &[String], times: &[f64], trace: &[Vec<State>]) -> io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "iteration,node,{}", state_header(names, &[]))?;
    for (i, nodes) in trace.iter().enumerate() {
        for (n, x) in nodes.iter().enumerate() {
            writeln!(out, "{i},{n},{}", state_row(times[n], x, &[]))?;
        }
    }
    out.flush()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    fs::write(path, text + "\n")
}

/// Reads a file written by [`write_states`]: the header and the rows.
pub fn read_states(path: &Path) -> io::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "empty file"))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|line| {
            line.split(',')
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
                })
                .collect()
        })
        .collect::<io::Result<_>>()?;
    Ok((header, rows))
}
