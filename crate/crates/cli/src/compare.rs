//! Node-wise comparison of a Parareal solution against the serial fine solve.

use parareal_core::State;
use serde::Serialize;

use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeError {
    pub euclidean: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub rows: Vec<NodeError>,
    pub max_euclidean: f64,
    pub max_abs: f64,
    /// Per component: largest absolute error over the nodes divided by the
    /// largest magnitude of that component in the serial solution.
    pub component_relative: Vec<f64>,
}

pub fn compare_with_serial(parareal: &[State], serial: &[State]) -> Result<Comparison, RunError> {
    if parareal.len() != serial.len() {
        return Err(RunError::Shape(format!(
            "{} Parareal nodes against {} serial nodes",
            parareal.len(),
            serial.len()
        )));
    }
    let d = serial.first().map_or(0, |x| x.len());
    if parareal.iter().chain(serial).any(|x| x.len() != d) {
        return Err(RunError::Shape("node states differ in dimension".into()));
    }
    let rows: Vec<NodeError> = parareal
        .iter()
        .zip(serial)
        .map(|(p, s)| {
            let diff = p - s;
            NodeError {
                euclidean: diff.norm(),
                max_abs: diff.amax(),
            }
        })
        .collect();
    let component_relative = (0..d)
        .map(|k| {
            let err = parareal
                .iter()
                .zip(serial)
                .map(|(p, s)| (p[k] - s[k]).abs())
                .fold(0.0, f64::max);
            let scale = serial.iter().map(|s| s[k].abs()).fold(0.0, f64::max);
            if err == 0.0 {
                0.0
            } else {
                err / scale
            }
        })
        .collect();
    Ok(Comparison {
        max_euclidean: rows.iter().map(|r| r.euclidean).fold(0.0, f64::max),
        max_abs: rows.iter().map(|r| r.max_abs).fold(0.0, f64::max),
        rows,
        component_relative,
    })
}
