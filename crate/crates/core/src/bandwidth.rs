//! Perplexity, per-point bandwidth calibration, kernel density estimation,
//! and the limiting adaptive bandwidth σ_κ(x) = (2πe)^{-1/2} (κ/ρ(x))^{1/d}.
//!
//! All conditional sums exclude the self term `k = i`. Weights are computed
//! relative to the nearest neighbor (`exp(-(D_k - D_min) / 2σ²)`), so the
//! largest weight is exactly one and tiny bandwidths never produce NaN.

use std::f64::consts::{E, PI};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{Dataset, Density};
use crate::error::{Error, Result};

/// `exp(-t)` is exactly `0.0` in f64 for every `t` above this value.
pub(crate) const UNDERFLOW_EXPONENT: f64 = 746.0;

/// Calibration rows skip terms with `exp(-t) < exp(-60)`. The nearest
/// neighbor has weight 1, so even 10⁹ skipped terms move the sum by less
/// than one ulp.
const NEGLIGIBLE_EXPONENT: f64 = 60.0;

const MAX_BRACKET_STEPS: usize = 200;
const MAX_BISECTION_STEPS: usize = 100;

/// How the per-point bandwidths were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileMode {
    /// Solved from a perplexity target.
    Calibrated,
    /// `σ_i = h σ_κ(X_i)` from the generating density.
    Analytic,
}

impl ProfileMode {
    fn as_str(self) -> &'static str {
        match self {
            ProfileMode::Calibrated => "calibrated",
            ProfileMode::Analytic => "analytic",
        }
    }
}

/// Per-point bandwidths `σ_{i,n}` together with the scale `h` and κ.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthProfile {
    sigmas: Vec<f64>,
    h: f64,
    kappa: f64,
    mode: ProfileMode,
}

impl BandwidthProfile {
    pub fn new(sigmas: Vec<f64>, h: f64, kappa: f64, mode: ProfileMode) -> Result<Self> {
        if sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidArgument("bandwidths must be finite and positive".into()));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidArgument(format!("scale h must be positive, got {h}")));
        }
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::InvalidArgument(format!("kappa must be positive, got {kappa}")));
        }
        Ok(Self { sigmas, h, kappa, mode })
    }

    /// Every point gets the same bandwidth.
    pub fn constant(n: usize, sigma: f64, h: f64, kappa: f64) -> Result<Self> {
        Self::new(vec![sigma; n], h, kappa, ProfileMode::Calibrated)
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn mode(&self) -> ProfileMode {
        self.mode
    }

    /// Normalized bandwidth `σ̂_n(X_i) = σ_{i,n} / h`.
    pub fn sigma_hat(&self, i: usize) -> f64 {
        self.sigmas[i] / self.h
    }

    /// Copy with a different scale `h`, keeping the bandwidths.
    pub fn with_h(&self, h: f64) -> Result<Self> {
        Self::new(self.sigmas.clone(), h, self.kappa, self.mode)
    }

    /// CSV with header `i,sigma,h,kappa,mode`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "sigma", "h", "kappa", "mode"])?;
        for (i, s) in self.sigmas.iter().enumerate() {
            w.write_record([
                i.to_string(),
                s.to_string(),
                self.h.to_string(),
                self.kappa.to_string(),
                self.mode.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            i: usize,
            sigma: f64,
            h: f64,
            kappa: f64,
            mode: ProfileMode,
        }
        let mut r = csv::Reader::from_reader(reader);
        let mut sigmas = Vec::new();
        let mut meta = None;
        for (expected, row) in r.deserialize::<Row>().enumerate() {
            let row = row?;
            if row.i != expected {
                return Err(Error::InvalidArgument(format!(
                    "profile rows must be in index order (row {expected} has i = {})",
                    row.i
                )));
            }
            meta.get_or_insert((row.h, row.kappa, row.mode));
            sigmas.push(row.sigma);
        }
        let (h, kappa, mode) = meta.ok_or_else(|| Error::InvalidArgument("empty profile".into()))?;
        Self::new(sigmas, h, kappa, mode)
    }
}

/// Perplexity target; `Scaled` multiplies the value by `n h^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerplexityTarget {
    Raw(f64),
    Scaled(f64),
}

impl PerplexityTarget {
    /// Raw perplexity for a dataset of `n` points in dimension `d` at scale `h`.
    pub fn resolve(self, n: usize, d: usize, h: f64) -> f64 {
        match self {
            PerplexityTarget::Raw(v) => v,
            PerplexityTarget::Scaled(kappa) => kappa * n as f64 * h.powi(d as i32),
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("bandwidth must be positive, got {sigma}")))
    }
}

fn check_index(data: &Dataset, i: usize) -> Result<()> {
    if data.len() < 2 {
        return Err(Error::InvalidArgument("perplexity needs at least 2 points".into()));
    }
    if i >= data.len() {
        return Err(Error::InvalidArgument(format!("index {i} out of range for {} points", data.len())));
    }
    Ok(())
}

/// Squared distances from `X_i` to every other point.
fn row_distances(data: &Dataset, i: usize) -> Vec<f64> {
    let xi = data.point(i);
    (0..data.len())
        .filter(|&k| k != i)
        .map(|k| sq_dist(xi, data.point(k)))
        .collect()
}

fn min_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `log PP` by the closed form `log Σ_k w_k + Σ_k t_k w_k / Σ_k w_k`,
/// with `t_k = (D_k - D_min) / 2σ²` and `w_k = exp(-t_k)`.
pub(crate) fn log_perplexity(dist2: &[f64], dmin: f64, sigma: f64) -> f64 {
    let beta = 0.5 / (sigma * sigma);
    let (mut z, mut m) = (0.0, 0.0);
    for &d in dist2 {
        let t = beta * (d - dmin);
        let w = (-t).exp();
        z += w;
        m += t * w;
    }
    z.ln() + m / z
}

/// Shannon entropy `-Σ p log p` of the conditional distribution.
fn entropy(dist2: &[f64], dmin: f64, sigma: f64) -> f64 {
    let beta = 0.5 / (sigma * sigma);
    let log_z = dist2.iter().map(|d| (-beta * (d - dmin)).exp()).sum::<f64>().ln();
    dist2
        .iter()
        .map(|d| {
            let log_p = -beta * (d - dmin) - log_z;
            let p = log_p.exp();
            if p > 0.0 {
                -p * log_p
            } else {
                0.0
            }
        })
        .sum()
}

/// `PP(X_i | σ) = exp(-Σ_{k≠i} p_{k|i} log p_{k|i})`.
pub fn perplexity(data: &Dataset, i: usize, sigma: f64) -> Result<f64> {
    check_index(data, i)?;
    check_sigma(sigma)?;
    let dist2 = row_distances(data, i);
    Ok(entropy(&dist2, min_of(&dist2), sigma).exp())
}

/// Perplexity via the kernel-sum closed form; equal to [`perplexity`] up to rounding.
pub fn perplexity_closed_form(data: &Dataset, i: usize, sigma: f64) -> Result<f64> {
    check_index(data, i)?;
    check_sigma(sigma)?;
    let dist2 = row_distances(data, i);
    Ok(log_perplexity(&dist2, min_of(&dist2), sigma).exp())
}

/// Supplies the squared distances that can carry nonzero weight at bandwidth `sigma`.
trait RowSource {
    fn distances(&mut self, sigma: f64) -> (&[f64], f64);
}

struct FullRow {
    dist2: Vec<f64>,
    dmin: f64,
}

impl RowSource for FullRow {
    fn distances(&mut self, _sigma: f64) -> (&[f64], f64) {
        (&self.dist2, self.dmin)
    }
}

/// Points sorted by their first coordinate; neighbors within a radius are a
/// contiguous run of this order followed by a distance filter.
pub(crate) struct AxisIndex<'a> {
    data: &'a Dataset,
    order: Vec<usize>,
    rank: Vec<usize>,
}

impl<'a> AxisIndex<'a> {
    pub(crate) fn new(data: &'a Dataset) -> Self {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.sort_by(|&a, &b| data.point(a)[0].total_cmp(&data.point(b)[0]).then(a.cmp(&b)));
        let mut rank = vec![0; order.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        Self { data, order, rank }
    }

    fn key(&self, r: usize) -> f64 {
        self.data.point(self.order[r])[0]
    }

    /// Squared distance from `X_i` to its nearest other point.
    pub(crate) fn nearest_sq(&self, i: usize) -> f64 {
        let xi = self.data.point(i);
        let r0 = self.rank[i];
        let mut best = f64::INFINITY;
        let mut r = r0;
        while r > 0 {
            r -= 1;
            let dx = xi[0] - self.key(r);
            if dx * dx > best {
                break;
            }
            best = best.min(sq_dist(xi, self.data.point(self.order[r])));
        }
        for r in r0 + 1..self.order.len() {
            let dx = self.key(r) - xi[0];
            if dx * dx > best {
                break;
            }
            best = best.min(sq_dist(xi, self.data.point(self.order[r])));
        }
        best
    }

    /// Calls `f(k, |X_i - X_k|²)` for every `k ≠ i` within squared radius `r2`.
    pub(crate) fn for_each_within<F: FnMut(usize, f64)>(&self, i: usize, r2: f64, mut f: F) {
        let xi = self.data.point(i);
        let r0 = self.rank[i];
        let mut r = r0;
        while r > 0 {
            r -= 1;
            let dx = xi[0] - self.key(r);
            if dx * dx > r2 {
                break;
            }
            let k = self.order[r];
            let d = sq_dist(xi, self.data.point(k));
            if d <= r2 {
                f(k, d);
            }
        }
        for r in r0 + 1..self.order.len() {
            let dx = self.key(r) - xi[0];
            if dx * dx > r2 {
                break;
            }
            let k = self.order[r];
            let d = sq_dist(xi, self.data.point(k));
            if d <= r2 {
                f(k, d);
            }
        }
    }
}

/// Radius beyond which the relative weight `exp(-(D - D_min)/2σ²)` underflows to zero.
pub(crate) fn support_radius_sq(dmin: f64, sigma: f64) -> f64 {
    dmin + 2.0 * UNDERFLOW_EXPONENT * sigma * sigma
}

struct IndexedRow<'i, 'a> {
    index: &'i AxisIndex<'a>,
    i: usize,
    dmin: f64,
    gathered_for: f64,
    dist2: Vec<f64>,
}

impl RowSource for IndexedRow<'_, '_> {
    fn distances(&mut self, sigma: f64) -> (&[f64], f64) {
        // a list gathered for a wider bandwidth holds every nonzero term
        if sigma > self.gathered_for || sigma < 0.5 * self.gathered_for {
            self.dist2.clear();
            let r2 = self.dmin + 2.0 * NEGLIGIBLE_EXPONENT * sigma * sigma;
            let dist2 = &mut self.dist2;
            self.index.for_each_within(self.i, r2, |_, d| dist2.push(d));
            self.gathered_for = sigma;
        }
        (&self.dist2, self.dmin)
    }
}

fn solve_row<S: RowSource>(
    source: &mut S,
    i: usize,
    n: usize,
    d: usize,
    target: f64,
    h: f64,
    tol: f64,
) -> Result<f64> {
    let high = (n - 1) as f64;
    if !(target > 1.0 && target <= high) {
        return Err(Error::Unachievable {
            index: i,
            target,
            low: 1.0,
            high,
        });
    }
    let mut pp = |sigma: f64| {
        let (dist2, dmin) = source.distances(sigma);
        log_perplexity(dist2, dmin, sigma).exp()
    };
    let converged = |value: f64| (value - target).abs() <= tol * target;

    let mut sigma = h;
    let mut value = pp(sigma);
    if converged(value) {
        return Ok(sigma);
    }
    // PP grows roughly like σ^d, which gives a close first guess
    let guess = sigma * (target / value).powf(1.0 / d as f64);
    if guess.is_finite() && guess > 0.0 {
        sigma = guess.clamp(h / 64.0, h * 64.0);
        value = pp(sigma);
        if converged(value) {
            return Ok(sigma);
        }
    }
    let mut factor = 1.25f64;
    let (mut lo, mut hi);
    if value < target {
        lo = sigma;
        let mut steps = 0;
        loop {
            sigma *= factor;
            factor = (factor * factor).min(2.0);
            value = pp(sigma);
            if converged(value) {
                return Ok(sigma);
            }
            if value > target {
                hi = sigma;
                break;
            }
            lo = sigma;
            steps += 1;
            if steps >= MAX_BRACKET_STEPS {
                return Err(Error::Unachievable {
                    index: i,
                    target,
                    low: 1.0,
                    high: value,
                });
            }
        }
    } else {
        hi = sigma;
        let mut steps = 0;
        loop {
            sigma /= factor;
            factor = (factor * factor).min(2.0);
            value = pp(sigma);
            if converged(value) {
                return Ok(sigma);
            }
            if value < target {
                lo = sigma;
                break;
            }
            hi = sigma;
            steps += 1;
            if steps >= MAX_BRACKET_STEPS {
                // tied nearest neighbors put a floor under the perplexity
                return Err(Error::Unachievable {
                    index: i,
                    target,
                    low: value,
                    high,
                });
            }
        }
    }

    // prime the row source at the top of the bracket so bisection reuses it
    pp(hi);
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let value = pp(mid);
        residual = (value - target).abs() / target;
        if residual <= tol {
            return Ok(mid);
        }
        if value < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence {
        index: i,
        steps: MAX_BISECTION_STEPS,
        residual,
    })
}

/// Bandwidth σ with `|PP(X_i|σ) - target| ≤ tol · target`.
///
/// The bracket starts from `σ = h` rescaled by `(target / PP(h))^{1/d}` and
/// widens by factors growing from 1.25 to 2; it is then bisected for at most
/// 100 steps.
pub fn solve_bandwidth(
    data: &Dataset,
    i: usize,
    target: PerplexityTarget,
    h: f64,
    tol: f64,
) -> Result<f64> {
    check_index(data, i)?;
    check_sigma(h)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let dist2 = row_distances(data, i);
    let dmin = min_of(&dist2);
    let raw = target.resolve(data.len(), data.dim(), h);
    solve_row(&mut FullRow { dist2, dmin }, i, data.len(), data.dim(), raw, h, tol)
}

/// Solves every point against the scaled target `κ n h^d`.
pub fn calibrate_profile(data: &Dataset, kappa: f64, h: f64, tol: f64) -> Result<BandwidthProfile> {
    check_index(data, 0)?;
    check_sigma(h)?;
    if !(kappa > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidArgument("kappa and tolerance must be positive".into()));
    }
    let n = data.len();
    let target = PerplexityTarget::Scaled(kappa).resolve(n, data.dim(), h);
    let high = (n - 1) as f64;
    if !(target > 1.0 && target <= high) {
        return Err(Error::Unachievable {
            index: 0,
            target,
            low: 1.0,
            high,
        });
    }
    let index = AxisIndex::new(data);
    let sigmas = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = IndexedRow {
                index: &index,
                i,
                dmin: index.nearest_sq(i),
                gathered_for: 0.0,
                dist2: Vec::new(),
            };
            solve_row(&mut row, i, n, data.dim(), target, h, tol)
        })
        .collect::<Result<Vec<_>>>()?;
    BandwidthProfile::new(sigmas, h, kappa, ProfileMode::Calibrated)
}

/// σ_κ(x) for a density value `rho` in dimension `d`.
pub fn sigma_kappa(rho: f64, kappa: f64, d: usize) -> f64 {
    (kappa / rho).powf(1.0 / d as f64) / (2.0 * PI * E).sqrt()
}

/// Limiting normalized bandwidth `σ_κ(x) = (2πe)^{-1/2} (κ/ρ(x))^{1/d}`.
pub fn limit_bandwidth(density: &Density, kappa: f64, x: &[f64]) -> Result<f64> {
    let rho = density.eval(x)?;
    Ok(sigma_kappa(rho, kappa, density.dim()))
}

/// Deterministic profile `σ_i = h σ_κ(X_i)`.
pub fn analytic_profile(data: &Dataset, density: &Density, kappa: f64, h: f64) -> Result<BandwidthProfile> {
    if density.dim() != data.dim() {
        return Err(Error::DimensionMismatch(format!(
            "density has dimension {}, data has {}",
            density.dim(),
            data.dim()
        )));
    }
    let sigmas = (0..data.len())
        .map(|i| limit_bandwidth(density, kappa, data.point(i)).map(|s| h * s))
        .collect::<Result<Vec<_>>>()?;
    BandwidthProfile::new(sigmas, h, kappa, ProfileMode::Analytic)
}

/// Fixed-bandwidth Gaussian kernel density estimate at `x`.
pub fn kde(data: &Dataset, h: f64, x: &[f64]) -> Result<f64> {
    check_sigma(h)?;
    if x.len() != data.dim() {
        return Err(Error::DimensionMismatch(format!(
            "query has {} coordinates, data has {}",
            x.len(),
            data.dim()
        )));
    }
    let d = data.dim() as i32;
    let norm = (2.0 * PI).powf(-0.5 * d as f64) / (data.len() as f64 * h.powi(d));
    let inv = 0.5 / (h * h);
    let sum: f64 = (0..data.len())
        .map(|i| (-sq_dist(x, data.point(i)) * inv).exp())
        .sum();
    Ok(norm * sum)
}

/// Scale `h_n = n^{-1/(d + ξ)}`.
pub fn scale_for(n: usize, d: usize, xi: f64) -> f64 {
    (n as f64).powf(-1.0 / (d as f64 + xi))
}
