//! Deterministic tensor-grid quadrature.
//!
//! [`QuadratureGrid`] is the product midpoint rule used for every population
//! integral in [`crate::continuum`]. Gauss–Legendre panels are used only to
//! validate density normalization, so that the check does not share a code
//! path with the integrals it guards.

use ndarray::Array2;

use crate::density::Domain;
use crate::error::{Error, Result};

/// Product midpoint rule on an axis-aligned box.
///
/// Nodes are cell centers; every node carries the same weight, the cell
/// volume. Nodes are enumerated in row-major order (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    domain: Domain,
    counts: Vec<usize>,
    nodes: Array2<f64>,
}

impl QuadratureGrid {
    pub fn new(domain: &Domain, counts: &[usize]) -> Result<Self> {
        if counts.len() != domain.dim() {
            return Err(Error::DimensionMismatch(format!(
                "grid has {} axes, domain has dimension {}",
                counts.len(),
                domain.dim()
            )));
        }
        if counts.contains(&0) {
            return Err(Error::InvalidArgument("grid node counts must be positive".into()));
        }
        let nodes = tensor_nodes(domain, counts, |lo, hi, c, k| {
            lo + (hi - lo) * (k as f64 + 0.5) / c as f64
        });
        Ok(Self {
            domain: domain.clone(),
            counts: counts.to_vec(),
            nodes,
        })
    }

    /// The same number of nodes on every axis.
    pub fn uniform(domain: &Domain, per_axis: usize) -> Result<Self> {
        Self::new(domain, &vec![per_axis; domain.dim()])
    }

    /// Default resolution: 128 nodes for d = 1, 64 per axis for d = 2, 24 per axis above.
    pub fn default_for(domain: &Domain) -> Result<Self> {
        let per_axis = match domain.dim() {
            1 => 128,
            2 => 64,
            _ => 24,
        };
        Self::uniform(domain, per_axis)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.nodes.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    /// Node coordinates, one row per node.
    pub fn nodes(&self) -> &Array2<f64> {
        &self.nodes
    }

    pub fn node(&self, g: usize) -> &[f64] {
        self.nodes.row(g).to_slice().expect("grid nodes are contiguous")
    }

    /// Per-axis spacing.
    pub fn spacing(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|k| (self.domain.upper()[k] - self.domain.lower()[k]) / self.counts[k] as f64)
            .collect()
    }

    /// Weight shared by every node.
    pub fn weight(&self) -> f64 {
        self.spacing().iter().product()
    }

    pub fn weights_sum(&self) -> f64 {
        self.weight() * self.len() as f64
    }

    /// Integrates `f` with the midpoint rule.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        let w = self.weight();
        self.nodes.rows().into_iter().map(|x| f(x.to_slice().unwrap()) * w).sum()
    }
}

fn tensor_nodes<F>(domain: &Domain, counts: &[usize], coord: F) -> Array2<f64>
where
    F: Fn(f64, f64, usize, usize) -> f64,
{
    let d = counts.len();
    let total: usize = counts.iter().product();
    let mut nodes = Array2::zeros((total, d));
    let mut index = vec![0usize; d];
    for g in 0..total {
        for k in 0..d {
            nodes[[g, k]] = coord(domain.lower()[k], domain.upper()[k], counts[k], index[k]);
        }
        for k in (0..d).rev() {
            index[k] += 1;
            if index[k] < counts[k] {
                break;
            }
            index[k] = 0;
        }
    }
    nodes
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub(crate) fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    if order == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let n = order as f64;
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    for i in 0..order.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // Legendre recurrence: p1 = P_order(x), p0 = P_{order-1}(x)
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre rule on one axis with the given panel breakpoints.
pub(crate) fn composite_axis(breaks: &[f64], order: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(order);
    let mut nodes = Vec::with_capacity((breaks.len() - 1) * order);
    let mut weights = Vec::with_capacity(nodes.capacity());
    for pair in breaks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in gx.iter().zip(&gw) {
            nodes.push(mid + half * x);
            weights.push(half * w);
        }
    }
    (nodes, weights)
}

/// Tensor product of per-axis rules applied to `f`.
pub(crate) fn tensor_integrate<F: FnMut(&[f64]) -> f64>(
    axes: &[(Vec<f64>, Vec<f64>)],
    mut f: F,
) -> f64 {
    let d = axes.len();
    let mut index = vec![0usize; d];
    let mut x = vec![0.0; d];
    let total: usize = axes.iter().map(|a| a.0.len()).product();
    let mut sum = 0.0;
    for _ in 0..total {
        let mut w = 1.0;
        for k in 0..d {
            x[k] = axes[k].0[index[k]];
            w *= axes[k].1[index[k]];
        }
        sum += w * f(&x);
        for k in (0..d).rev() {
            index[k] += 1;
            if index[k] < axes[k].0.len() {
                break;
            }
            index[k] = 0;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for order in [1, 2, 5, 8] {
            let (x, w) = gauss_legendre(order);
            for deg in 0..(2 * order) {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let want = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - want).abs() < 1e-13, "order {order} deg {deg}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn midpoint_weights_sum_to_volume() {
        let domain = Domain::new(vec![0.0, -1.0], vec![2.0, 0.5]).unwrap();
        let grid = QuadratureGrid::new(&domain, &[7, 13]).unwrap();
        assert_eq!(grid.len(), 91);
        assert!((grid.weights_sum() - domain.volume()).abs() < 1e-12);
        let first = grid.node(0);
        assert!((first[0] - 1.0 / 7.0).abs() < 1e-15);
        assert!((first[1] - (-1.0 + 0.75 / 13.0)).abs() < 1e-15);
    }

    #[test]
    fn midpoint_rule_is_second_order() {
        let domain = Domain::unit(1);
        let err = |n| {
            let g = QuadratureGrid::uniform(&domain, n).unwrap();
            (g.integrate(|x| x[0].exp()) - (1f64.exp() - 1.0)).abs()
        };
        let ratio = err(32) / err(64);
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
    }
}
