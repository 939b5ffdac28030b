//! Ground-truth densities on boxes and seeded i.i.d. sampling.
//!
//! A [`Density`] is validated at construction: parameters are checked, the
//! normalization constant is computed in closed form, and the normalized
//! density is integrated with composite Gauss–Legendre panels to confirm
//! unit mass within [`NORMALIZATION_TOL`].

use std::f64::consts::{PI, SQRT_2};
use std::io::{Read, Write};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::quadrature::{composite_axis, tensor_integrate};

/// Allowed deviation of the integral of a density from one.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainRepr")]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Deserialize)]
struct DomainRepr {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<DomainRepr> for Domain {
    type Error = Error;

    fn try_from(r: DomainRepr) -> Result<Self> {
        Domain::new(r.lower, r.upper)
    }
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidDomain("dimension must be at least 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::InvalidDomain(format!(
                "lower has {} coordinates, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        for (k, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::InvalidDomain(format!(
                    "axis {k}: need finite lower < upper, got [{l}, {u}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The unit cube `[0, 1]^d`.
    pub fn unit(d: usize) -> Self {
        Self::new(vec![0.0; d], vec![1.0; d]).expect("unit cube is valid")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    /// Distance from an interior point to the boundary; zero outside.
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        if !self.contains(x) {
            return 0.0;
        }
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (v - l).min(u - v))
            .fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn check(&self, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideDomain {
                point: x.to_vec(),
                lower: self.lower.clone(),
                upper: self.upper.clone(),
            })
        }
    }
}

/// Parametric family of a [`Density`].
#[derive(Debug, Clone, PartialEq)]
pub enum DensityKind {
    Uniform,
    /// Isotropic Gaussian components truncated to the domain and renormalized.
    GaussianMixture {
        means: Vec<Vec<f64>>,
        scales: Vec<f64>,
        weights: Vec<f64>,
    },
    /// Constant on each cell of a regular tiling; `values` in row-major order.
    Tiles { shape: Vec<usize>, values: Vec<f64> },
}

/// A probability density on a box, bounded above and below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensityDescriptor", into = "DensityDescriptor")]
pub struct Density {
    domain: Domain,
    kind: DensityKind,
    normalization: f64,
    bounds: (f64, f64),
}

impl Density {
    pub fn new(domain: Domain, kind: DensityKind) -> Result<Self> {
        let d = domain.dim();
        match &kind {
            DensityKind::Uniform => {}
            DensityKind::GaussianMixture {
                means,
                scales,
                weights,
            } => {
                if means.is_empty() || means.len() != scales.len() || means.len() != weights.len() {
                    return Err(Error::InvalidDensity(
                        "mixture needs matching, nonempty means/scales/weights".into(),
                    ));
                }
                if means.iter().any(|m| m.len() != d || m.iter().any(|v| !v.is_finite())) {
                    return Err(Error::InvalidDensity(format!("every mean must have {d} finite coordinates")));
                }
                if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return Err(Error::InvalidDensity("scales must be positive".into()));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
                    return Err(Error::InvalidDensity(
                        "weights must be nonnegative with positive sum".into(),
                    ));
                }
            }
            DensityKind::Tiles { shape, values } => {
                if shape.len() != d || shape.contains(&0) {
                    return Err(Error::InvalidDensity(format!("tile shape must have {d} positive counts")));
                }
                if shape.iter().product::<usize>() != values.len() {
                    return Err(Error::InvalidDensity(format!(
                        "tile shape {shape:?} needs {} values, got {}",
                        shape.iter().product::<usize>(),
                        values.len()
                    )));
                }
                if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::InvalidDensity("tile values must be positive".into()));
                }
            }
        }

        let mut density = Self {
            domain,
            kind,
            normalization: 1.0,
            bounds: (0.0, 0.0),
        };
        density.normalization = density.raw_mass_in_box(density.domain.lower(), density.domain.upper());
        density.bounds = density.analytic_bounds();

        let integral = density.quadrature_mass();
        if (integral - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Normalization {
                integral,
                tolerance: NORMALIZATION_TOL,
            });
        }
        Ok(density)
    }

    pub fn uniform(domain: Domain) -> Result<Self> {
        Self::new(domain, DensityKind::Uniform)
    }

    pub fn gaussian_mixture(
        domain: Domain,
        means: Vec<Vec<f64>>,
        scales: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        Self::new(
            domain,
            DensityKind::GaussianMixture {
                means,
                scales,
                weights,
            },
        )
    }

    pub fn tiles(domain: Domain, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        Self::new(domain, DensityKind::Tiles { shape, values })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    /// Mass of the unnormalized form over the domain.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// ρ(x); fails outside the domain.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.domain.check(x)?;
        Ok(self.value(x))
    }

    /// ρ(x) without the containment check.
    pub(crate) fn value(&self, x: &[f64]) -> f64 {
        self.raw_value(x) / self.normalization
    }

    /// `(inf ρ, sup ρ)` over the domain.
    ///
    /// Exact for uniform and tiled densities and for a single Gaussian
    /// component. For mixtures the bounds are the weighted sums of the
    /// per-component extremes, which bracket the true extremes.
    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    /// ρ* = max(sup ρ, 1 / inf ρ), so that 1/ρ* ≤ ρ ≤ ρ*.
    pub fn rho_star(&self) -> f64 {
        let (lo, hi) = self.bounds;
        hi.max(1.0 / lo)
    }

    /// Probability mass of the intersection of `[lower, upper]` with the domain.
    pub fn mass_in_box(&self, lower: &[f64], upper: &[f64]) -> f64 {
        self.raw_mass_in_box(lower, upper) / self.normalization
    }

    fn raw_value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            DensityKind::Uniform => 1.0,
            DensityKind::GaussianMixture {
                means,
                scales,
                weights,
            } => means
                .iter()
                .zip(scales)
                .zip(weights)
                .map(|((m, s), w)| w * gaussian_pdf(x, m, *s))
                .sum(),
            DensityKind::Tiles { shape, values } => values[self.tile_index(shape, x)],
        }
    }

    fn tile_index(&self, shape: &[usize], x: &[f64]) -> usize {
        let mut index = 0;
        for k in 0..shape.len() {
            let (l, u) = (self.domain.lower[k], self.domain.upper[k]);
            let t = ((x[k] - l) / (u - l) * shape[k] as f64).floor();
            let c = (t.max(0.0) as usize).min(shape[k] - 1);
            index = index * shape[k] + c;
        }
        index
    }

    fn raw_mass_in_box(&self, lower: &[f64], upper: &[f64]) -> f64 {
        let d = self.dim();
        let lo: Vec<f64> = (0..d).map(|k| lower[k].max(self.domain.lower[k])).collect();
        let hi: Vec<f64> = (0..d).map(|k| upper[k].min(self.domain.upper[k])).collect();
        if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            return 0.0;
        }
        match &self.kind {
            DensityKind::Uniform => lo.iter().zip(&hi).map(|(a, b)| b - a).product(),
            DensityKind::GaussianMixture {
                means,
                scales,
                weights,
            } => means
                .iter()
                .zip(scales)
                .zip(weights)
                .map(|((m, s), w)| {
                    w * (0..d)
                        .map(|k| normal_interval(lo[k], hi[k], m[k], *s))
                        .product::<f64>()
                })
                .sum(),
            DensityKind::Tiles { shape, values } => {
                let mut total = 0.0;
                let mut tile = vec![0usize; d];
                for v in values {
                    let mut overlap = 1.0;
                    for k in 0..d {
                        let width = (self.domain.upper[k] - self.domain.lower[k]) / shape[k] as f64;
                        let a = self.domain.lower[k] + width * tile[k] as f64;
                        let b = a + width;
                        overlap *= (b.min(hi[k]) - a.max(lo[k])).max(0.0);
                    }
                    total += v * overlap;
                    for k in (0..d).rev() {
                        tile[k] += 1;
                        if tile[k] < shape[k] {
                            break;
                        }
                        tile[k] = 0;
                    }
                }
                total
            }
        }
    }

    fn analytic_bounds(&self) -> (f64, f64) {
        let z = self.normalization;
        match &self.kind {
            DensityKind::Uniform => (1.0 / z, 1.0 / z),
            DensityKind::Tiles { values, .. } => {
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(0.0, f64::max);
                (lo / z, hi / z)
            }
            DensityKind::GaussianMixture {
                means,
                scales,
                weights,
            } => {
                let (mut lo, mut hi) = (0.0, 0.0);
                for ((m, s), w) in means.iter().zip(scales).zip(weights) {
                    // closest point of the box to the mean, and the farthest corner
                    let near: Vec<f64> = (0..self.dim())
                        .map(|k| m[k].clamp(self.domain.lower[k], self.domain.upper[k]))
                        .collect();
                    let far: Vec<f64> = (0..self.dim())
                        .map(|k| {
                            let (l, u) = (self.domain.lower[k], self.domain.upper[k]);
                            if (m[k] - l).abs() > (u - m[k]).abs() {
                                l
                            } else {
                                u
                            }
                        })
                        .collect();
                    hi += w * gaussian_pdf(&near, m, *s);
                    lo += w * gaussian_pdf(&far, m, *s);
                }
                (lo / z, hi / z)
            }
        }
    }

    /// Integral of the normalized density by composite Gauss–Legendre panels,
    /// with panel breaks on tile edges for tiled densities.
    fn quadrature_mass(&self) -> f64 {
        const ORDER: usize = 8;
        const BUDGET: f64 = 300_000.0;
        let d = self.dim();
        let per_axis = BUDGET.powf(1.0 / d as f64).floor() as usize;
        let panels = (per_axis / ORDER).max(1);
        let axes: Vec<_> = (0..d)
            .map(|k| {
                let (l, u) = (self.domain.lower[k], self.domain.upper[k]);
                let breaks: Vec<f64> = match &self.kind {
                    DensityKind::Tiles { shape, .. } => {
                        let sub = (panels / shape[k]).max(1);
                        let cells = shape[k] * sub;
                        (0..=cells).map(|i| l + (u - l) * i as f64 / cells as f64).collect()
                    }
                    _ => (0..=panels).map(|i| l + (u - l) * i as f64 / panels as f64).collect(),
                };
                composite_axis(&breaks, ORDER)
            })
            .collect();
        tensor_integrate(&axes, |x| self.value(x))
    }

    /// `n` i.i.d. draws by rejection against the uniform law on the domain,
    /// with envelope `sup ρ`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be at least 1".into()));
        }
        let d = self.dim();
        let envelope = self.bounds.1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Array2::zeros((n, d));
        let mut x = vec![0.0; d];
        for i in 0..n {
            loop {
                for k in 0..d {
                    let (l, u) = (self.domain.lower[k], self.domain.upper[k]);
                    x[k] = l + (u - l) * rng.gen::<f64>();
                }
                if rng.gen::<f64>() * envelope < self.value(&x) {
                    break;
                }
            }
            points.row_mut(i).as_slice_mut().unwrap().copy_from_slice(&x);
        }
        Ok(Dataset {
            points,
            seed: Some(seed),
            density: Some(self.clone()),
        })
    }
}

fn gaussian_pdf(x: &[f64], mean: &[f64], scale: f64) -> f64 {
    let d = x.len() as f64;
    let r2: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    (-0.5 * r2 / (scale * scale)).exp() / (scale * (2.0 * PI).sqrt()).powf(d)
}

/// P(a ≤ N(mean, scale²) ≤ b).
fn normal_interval(a: f64, b: f64, mean: f64, scale: f64) -> f64 {
    let ta = (a - mean) / (scale * SQRT_2);
    let tb = (b - mean) / (scale * SQRT_2);
    // Use the tail that avoids cancellation.
    if ta >= 0.0 {
        0.5 * (erfc(ta) - erfc(tb))
    } else if tb <= 0.0 {
        0.5 * (erfc(-tb) - erfc(-ta))
    } else {
        1.0 - 0.5 * (erfc(tb) + erfc(-ta))
    }
}

/// JSON form: `{"domain":{...},"kind":"uniform"|...,"params":{...}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityDescriptor {
    pub domain: Domain,
    pub kind: String,
    #[serde(default)]
    pub params: DensityParams,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DensityParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl TryFrom<DensityDescriptor> for Density {
    type Error = Error;

    fn try_from(desc: DensityDescriptor) -> Result<Self> {
        let missing = |what: &str| Error::InvalidDensity(format!("{} requires params.{what}", desc.kind));
        let kind = match desc.kind.as_str() {
            "uniform" => DensityKind::Uniform,
            "truncated-gaussian-mixture" => {
                let means = desc.params.means.clone().ok_or_else(|| missing("means"))?;
                let scales = desc.params.scales.clone().ok_or_else(|| missing("scales"))?;
                let weights = desc
                    .params
                    .weights
                    .clone()
                    .unwrap_or_else(|| vec![1.0; means.len()]);
                DensityKind::GaussianMixture {
                    means,
                    scales,
                    weights,
                }
            }
            "piecewise-constant-tiles" => DensityKind::Tiles {
                shape: desc.params.shape.clone().ok_or_else(|| missing("shape"))?,
                values: desc.params.values.clone().ok_or_else(|| missing("values"))?,
            },
            other => return Err(Error::InvalidDensity(format!("unknown density kind {other:?}"))),
        };
        Density::new(desc.domain, kind)
    }
}

impl From<Density> for DensityDescriptor {
    fn from(density: Density) -> Self {
        let (kind, params) = match density.kind {
            DensityKind::Uniform => ("uniform", DensityParams::default()),
            DensityKind::GaussianMixture {
                means,
                scales,
                weights,
            } => (
                "truncated-gaussian-mixture",
                DensityParams {
                    means: Some(means),
                    scales: Some(scales),
                    weights: Some(weights),
                    ..Default::default()
                },
            ),
            DensityKind::Tiles { shape, values } => (
                "piecewise-constant-tiles",
                DensityParams {
                    shape: Some(shape),
                    values: Some(values),
                    ..Default::default()
                },
            ),
        };
        DensityDescriptor {
            domain: density.domain,
            kind: kind.to_string(),
            params,
        }
    }
}

/// `n` points in R^d, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Array2<f64>,
    seed: Option<u64>,
    density: Option<Density>,
}

impl Dataset {
    pub fn from_points(points: Array2<f64>) -> Result<Self> {
        if points.ncols() == 0 {
            return Err(Error::DimensionMismatch("points need at least one coordinate".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("points must be finite".into()));
        }
        Ok(Self {
            points: points.as_standard_layout().into_owned(),
            seed: None,
            density: None,
        })
    }

    /// Builds a dataset from row vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("rows have different lengths".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let points = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        Self::from_points(points)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i).to_slice().expect("standard layout")
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn density(&self) -> Option<&Density> {
        self.density.as_ref()
    }

    /// Attaches the generating density (e.g. after loading from CSV).
    pub fn with_density(mut self, density: Density) -> Result<Self> {
        if density.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "density has dimension {}, points have {}",
                density.dim(),
                self.dim()
            )));
        }
        self.density = Some(density);
        Ok(self)
    }

    /// CSV with header `x0,...,x{d-1}`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_matrix_csv(writer, "x", &self.points)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        Self::from_points(read_matrix_csv(reader)?)
    }
}

pub(crate) fn write_matrix_csv<W: Write>(writer: W, prefix: &str, m: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = (0..m.ncols()).map(|k| format!("{prefix}{k}")).collect();
    w.write_record(&header)?;
    for row in m.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read_matrix_csv<R: Read>(reader: R) -> Result<Array2<f64>> {
    let mut r = csv::Reader::from_reader(reader);
    let cols = r.headers()?.len();
    let mut flat = Vec::new();
    let mut rows = 0;
    for record in r.records() {
        let record = record?;
        for field in record.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("not a number: {field:?}")))?;
            flat.push(v);
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols), flat).map_err(|e| Error::DimensionMismatch(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_tile() -> Density {
        Density::tiles(Domain::unit(1), vec![2], vec![2.0 / 3.0, 4.0 / 3.0]).unwrap()
    }

    fn single_gaussian() -> Density {
        Density::gaussian_mixture(Domain::unit(1), vec![vec![0.5]], vec![0.25], vec![1.0]).unwrap()
    }

    #[test]
    fn uniform_unit_square_is_one() {
        let rho = Density::uniform(Domain::unit(2)).unwrap();
        assert_eq!(rho.eval(&[0.3, 0.7]).unwrap(), 1.0);
        assert_eq!(rho.bounds(), (1.0, 1.0));
    }

    #[test]
    fn two_tile_values_and_bounds() {
        let rho = two_tile();
        assert!((rho.eval(&[0.25]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((rho.eval(&[0.75]).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        let (lo, hi) = rho.bounds();
        assert!((lo - 2.0 / 3.0).abs() < 1e-15 && (hi - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tile_values_are_renormalized() {
        let rho = Density::tiles(Domain::unit(1), vec![2], vec![1.0, 2.0]).unwrap();
        assert!((rho.eval(&[0.1]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn truncated_gaussian_peak_and_mass() {
        let rho = single_gaussian();
        let peak = rho.eval(&[0.5]).unwrap();
        // independent oracle: fine midpoint sum of the normalized density
        let n = 200_000;
        let mut integral = 0.0;
        let mut max = 0.0f64;
        let mut min = f64::INFINITY;
        for i in 0..n {
            let x = (i as f64 + 0.5) / n as f64;
            let v = rho.eval(&[x]).unwrap();
            integral += v / n as f64;
            max = max.max(v);
            min = min.min(v);
        }
        for x in [0.0, 1.0] {
            min = min.min(rho.eval(&[x]).unwrap());
        }
        assert!((integral - 1.0).abs() < 1e-6);
        assert!(peak >= max);
        let (lo, hi) = rho.bounds();
        assert!((hi - peak).abs() < 1e-12);
        assert!((hi - max).abs() < 1e-6, "{hi} vs {max}");
        assert!((lo - min).abs() < 1e-6, "{lo} vs {min}");
        // endpoints are the minimizers
        assert!((lo - rho.eval(&[0.0]).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn eval_outside_is_domain_error() {
        let rho = Density::uniform(Domain::unit(2)).unwrap();
        assert!(matches!(rho.eval(&[1.5, 0.2]), Err(Error::OutsideDomain { .. })));
        assert!(matches!(rho.eval(&[0.5]), Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(Domain::new(vec![1.0], vec![0.0]).is_err());
        assert!(Domain::new(vec![], vec![]).is_err());
        assert!(Density::tiles(Domain::unit(1), vec![2], vec![1.0]).is_err());
        assert!(Density::tiles(Domain::unit(1), vec![2], vec![1.0, 0.0]).is_err());
        assert!(Density::gaussian_mixture(Domain::unit(1), vec![vec![0.5]], vec![-1.0], vec![1.0]).is_err());
    }

    #[test]
    fn mass_in_box_matches_definition() {
        let rho = two_tile();
        assert!((rho.mass_in_box(&[0.5], &[1.0]) - 2.0 / 3.0).abs() < 1e-15);
        assert!((rho.mass_in_box(&[0.25], &[0.75]) - 0.5).abs() < 1e-15);
        let g = single_gaussian();
        assert!((g.mass_in_box(&[0.0], &[1.0]) - 1.0).abs() < 1e-14);
        assert!((g.mass_in_box(&[0.0], &[0.5]) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn sampling_is_seeded() {
        let rho = two_tile();
        let a = rho.sample(500, 9).unwrap();
        let b = rho.sample(500, 9).unwrap();
        let c = rho.sample(500, 10).unwrap();
        assert_eq!(a.points(), b.points());
        assert_ne!(a.points(), c.points());
        assert!(a.points().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn uniform_sample_mean() {
        let n = 100_000;
        let data = Density::uniform(Domain::unit(1)).unwrap().sample(n, 1).unwrap();
        let mean = data.points().mean().unwrap();
        let bound = 3.0 * (1.0 / 12f64.sqrt()) / (n as f64).sqrt();
        assert!((mean - 0.5).abs() < bound, "mean {mean}");
    }

    #[test]
    fn two_tile_sample_fraction() {
        let n = 100_000;
        let data = two_tile().sample(n, 3).unwrap();
        let right = data.points().iter().filter(|&&x| x >= 0.5).count() as f64 / n as f64;
        assert!((right - 2.0 / 3.0).abs() < 0.01, "fraction {right}");
    }

    #[test]
    fn descriptor_json_round_trip() {
        let json = r#"{"domain":{"lower":[0,0],"upper":[1,2]},"kind":"truncated-gaussian-mixture",
            "params":{"means":[[0.2,0.5],[0.8,1.5]],"scales":[0.3,0.2],"weights":[1,2]}}"#;
        let rho: Density = serde_json::from_str(json).unwrap();
        let back: Density = serde_json::from_str(&serde_json::to_string(&rho).unwrap()).unwrap();
        assert_eq!(rho, back);
        assert!(serde_json::from_str::<Density>(r#"{"domain":{"lower":[0],"upper":[1]},"kind":"nope"}"#).is_err());
        let u: Density = serde_json::from_str(r#"{"domain":{"lower":[0],"upper":[2]},"kind":"uniform"}"#).unwrap();
        assert_eq!(u.eval(&[1.0]).unwrap(), 0.5);
    }

    #[test]
    fn dataset_csv_round_trip() {
        let data = Density::uniform(Domain::unit(3)).unwrap().sample(17, 4).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x0,x1,x2\n"));
        let back = Dataset::read_csv(&buf[..]).unwrap();
        assert_eq!(back.points(), data.points());
    }
}
