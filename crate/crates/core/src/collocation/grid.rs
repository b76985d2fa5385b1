use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest node count for which the moment system is solved.
pub const MAX_QUADRATURE_NODES: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    #[default]
    Uniform,
    Lobatto,
}

/// Collocation nodes on `[0, dt]` with interpolatory quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationGrid {
    /// `None` for caller-supplied nodes.
    pub kind: Option<NodeKind>,
    pub step: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// The rule integrates polynomials of degree `order - 1` exactly.
    pub order: usize,
}

impl CollocationGrid {
    pub fn new(kind: NodeKind, count: usize, dt: f64) -> Result<Self> {
        let nodes = collocation_nodes(kind, count, dt)?;
        let mut grid = Self::from_nodes(nodes, dt)?;
        grid.kind = Some(kind);
        Ok(grid)
    }

    pub fn from_nodes(nodes: Vec<f64>, dt: f64) -> Result<Self> {
        let weights = quadrature_weights(&nodes, dt)?;
        Ok(CollocationGrid {
            kind: None,
            step: dt,
            order: nodes.len(),
            nodes,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn abs_weight_sum(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }
}

/// `count` collocation times in `[0, dt]`.
///
/// Uniform nodes include both endpoints (a single node sits at the midpoint).
/// Lobatto nodes are the endpoints plus the roots of `P'_{count-1}`, mapped
/// from `[-1, 1]`.
pub fn collocation_nodes(kind: NodeKind, count: usize, dt: f64) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::InvalidArgument("need at least one collocation node".into()));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "interval length must be positive, got {dt}"
        )));
    }
    match kind {
        NodeKind::Uniform if count == 1 => Ok(vec![dt / 2.0]),
        NodeKind::Uniform => {
            let last = (count - 1) as f64;
            let mut nodes: Vec<f64> = (0..count).map(|c| c as f64 * dt / last).collect();
            nodes[count - 1] = dt;
            Ok(nodes)
        }
        NodeKind::Lobatto if count == 1 => Err(Error::InvalidArgument("Lobatto rule needs at least two nodes".into())),
        NodeKind::Lobatto => Ok(lobatto_reference(count)
            .into_iter()
            .map(|x| (x + 1.0) / 2.0 * dt)
            .collect()),
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut prev, mut cur) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let next = ((2.0 * k - 1.0) * x * cur - (k - 1.0) * prev) / k;
        prev = cur;
        cur = next;
    }
    // P_n' from the derivative identity (x^2 - 1) P_n' = n (x P_n - P_{n-1}).
    let nf = n as f64;
    let deriv = if (x * x - 1.0).abs() < 1e-300 {
        x.powi(n as i32 + 1) * nf * (nf + 1.0) / 2.0
    } else {
        nf * (x * cur - prev) / (x * x - 1.0)
    };
    (cur, deriv)
}

/// Gauss–Lobatto points on `[-1, 1]`, ascending.
fn lobatto_reference(count: usize) -> Vec<f64> {
    let n = count - 1;
    let nf = n as f64;
    let mut nodes = vec![-1.0; count];
    nodes[n] = 1.0;
    for (k, node) in nodes.iter_mut().enumerate().take(n).skip(1) {
        // Chebyshev–Lobatto initial guess, then Newton on P_n' using P_n''
        // from the Legendre equation.
        let mut x = -(std::f64::consts::PI * k as f64 / nf).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let ddp = (2.0 * x * dp - nf * (nf + 1.0) * p) / (1.0 - x * x);
            let dx = dp / ddp;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        *node = x;
    }
    nodes
}

/// Interpolatory quadrature weights for `nodes` on `[0, dt]`.
pub fn quadrature_weights(nodes: &[f64], dt: f64) -> Result<Vec<f64>> {
    let count = nodes.len();
    if count == 0 {
        return Err(Error::InvalidArgument("need at least one quadrature node".into()));
    }
    if count > MAX_QUADRATURE_NODES {
        return Err(Error::Unsupported(format!(
            "quadrature with {count} nodes (at most {MAX_QUADRATURE_NODES})"
        )));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "interval length must be positive, got {dt}"
        )));
    }
    if nodes.iter().any(|&t| !(0.0..=dt).contains(&t)) {
        return Err(Error::InvalidArgument("quadrature nodes must lie in [0, dt]".into()));
    }
    if nodes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Singular("moment system (nodes not strictly increasing)"));
    }

    let scaled: Vec<f64> = nodes.iter().map(|t| t / dt).collect();
    let vandermonde = DMatrix::from_fn(count, count, |k, c| scaled[c].powi(k as i32));
    let moments = DVector::from_fn(count, |k, _| 1.0 / (k + 1) as f64);
    let weights = vandermonde
        .lu()
        .solve(&moments)
        .ok_or(Error::Singular("moment system"))?;
    Ok(weights.iter().map(|w| w * dt).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_nodes() {
        assert_eq!(
            collocation_nodes(NodeKind::Uniform, 5, 1.0).unwrap(),
            [0.0, 0.25, 0.5, 0.75, 1.0]
        );
        assert_eq!(collocation_nodes(NodeKind::Uniform, 2, 0.3).unwrap(), [0.0, 0.3]);
        assert_eq!(collocation_nodes(NodeKind::Uniform, 1, 0.3).unwrap(), [0.15]);
    }

    #[test]
    fn lobatto_nodes() {
        let three = collocation_nodes(NodeKind::Lobatto, 3, 1.0).unwrap();
        assert_abs_diff_eq!(three.as_slice(), [0.0, 0.5, 1.0].as_slice(), epsilon = 1e-15);
        // Interior points of the 4-point rule are +-1/sqrt(5) on [-1, 1].
        let four = collocation_nodes(NodeKind::Lobatto, 4, 2.0).unwrap();
        let r = 1.0 / 5f64.sqrt();
        assert_abs_diff_eq!(four[1], 1.0 - r, epsilon = 1e-14);
        assert_abs_diff_eq!(four[2], 1.0 + r, epsilon = 1e-14);
        // 5-point rule: 0 and +-sqrt(3/7).
        let five = collocation_nodes(NodeKind::Lobatto, 5, 2.0).unwrap();
        assert_abs_diff_eq!(five[2], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(five[3], 1.0 + (3.0f64 / 7.0).sqrt(), epsilon = 1e-14);
        assert!(collocation_nodes(NodeKind::Lobatto, 1, 1.0).is_err());
    }

    #[test]
    fn trapezoid_and_midpoint_weights() {
        assert_abs_diff_eq!(
            quadrature_weights(&[0.0, 1.0], 1.0).unwrap().as_slice(),
            [0.5, 0.5].as_slice(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(quadrature_weights(&[0.2], 0.4).unwrap()[0], 0.4, epsilon = 1e-15);
    }

    #[test]
    fn boole_weights() {
        let w = quadrature_weights(&[0.0, 0.25, 0.5, 0.75, 1.0], 1.0).unwrap();
        let expected = [7.0 / 90.0, 32.0 / 90.0, 12.0 / 90.0, 32.0 / 90.0, 7.0 / 90.0];
        assert_abs_diff_eq!(w.as_slice(), expected.as_slice(), epsilon = 1e-13);
    }

    #[test]
    fn lobatto_weights_match_closed_form() {
        // 4-point Lobatto on [-1, 1]: 1/6, 5/6, 5/6, 1/6.
        let grid = CollocationGrid::new(NodeKind::Lobatto, 4, 2.0).unwrap();
        let expected = [1.0 / 6.0, 5.0 / 6.0, 5.0 / 6.0, 1.0 / 6.0];
        assert_abs_diff_eq!(grid.weights.as_slice(), expected.as_slice(), epsilon = 1e-13);
    }

    #[test]
    fn bad_nodes_rejected() {
        assert!(matches!(quadrature_weights(&[0.1, 0.1], 1.0), Err(Error::Singular(_))));
        assert!(quadrature_weights(&[0.5, 1.5], 1.0).is_err());
        let many: Vec<f64> = (0..10).map(|c| c as f64 / 9.0).collect();
        assert!(matches!(quadrature_weights(&many, 1.0), Err(Error::Unsupported(_))));
    }
}
