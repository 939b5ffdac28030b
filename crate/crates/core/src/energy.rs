//! Discrete tSNE energy: affinities, KL objective, the attraction/repulsion
//! decomposition `KL = D̃ + A + R*`, the rescaled objective `A/h² + R*`,
//! and analytic gradients in the embedding coordinates.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{support_radius_sq, AxisIndex, BandwidthProfile};
use crate::density::{read_matrix_csv, write_matrix_csv, Dataset};
use crate::error::{Error, Result};
use crate::smooth_map::SmoothMap;

/// Classic tSNE or the variant whose attraction is divided by `h²`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Classic,
    Rescaled,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classic" => Ok(Variant::Classic),
            "rescaled" => Ok(Variant::Rescaled),
            other => Err(Error::InvalidArgument(format!("unknown variant {other:?} (classic|rescaled)"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Classic => "classic",
            Variant::Rescaled => "rescaled",
        })
    }
}

/// Which pairs enter the repulsion normalizer.
///
/// `Canonical` sums `k ≠ l`, matching the embedded affinities, and makes
/// `KL = D̃ + A + R*` exact. `Inclusive` also counts the `n` diagonal pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepulsionConvention {
    #[default]
    Canonical,
    Inclusive,
}

impl RepulsionConvention {
    /// Normalizer from the off-diagonal kernel sum `s`.
    pub fn normalizer(self, s: f64, n: usize) -> f64 {
        match self {
            RepulsionConvention::Canonical => s,
            RepulsionConvention::Inclusive => s + n as f64,
        }
    }

    /// `log(normalizer / n²)`.
    pub fn log_mean(self, s: f64, n: usize) -> f64 {
        (self.normalizer(s, n) / (n as f64 * n as f64)).ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Explicit,
    MapApplied(SmoothMap),
}

/// Embedded points `y_1, …, y_n ∈ R^m`, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    y: Array2<f64>,
    provenance: Provenance,
}

impl Embedding {
    pub fn new(y: Array2<f64>) -> Result<Self> {
        if y.ncols() == 0 {
            return Err(Error::DimensionMismatch("embedding needs at least one coordinate".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("embedding entries must be finite".into()));
        }
        Ok(Self {
            y: y.as_standard_layout().into_owned(),
            provenance: Provenance::Explicit,
        })
    }

    /// `y_i = T(X_i)`.
    pub fn from_map(map: &SmoothMap, data: &Dataset) -> Result<Self> {
        let mut e = Self::new(map.apply(data)?)?;
        e.provenance = Provenance::MapApplied(map.clone());
        Ok(e)
    }

    pub fn y(&self) -> &Array2<f64> {
        &self.y
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.y
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.y.ncols()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.y.row(i).to_slice().expect("standard layout")
    }

    /// CSV with header `y0,...,y{m-1}`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_matrix_csv(writer, "y", &self.y)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        Self::new(read_matrix_csv(reader)?)
    }
}

/// Joint affinities `p_ij` and conditionals `p_{j|i}` for one profile.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    p: Array2<f64>,
    conditionals: Array2<f64>,
    profile: BandwidthProfile,
}

impl AffinityMatrix {
    pub fn p(&self) -> &Array2<f64> {
        &self.p
    }

    /// Row `i` holds `p_{·|i}`.
    pub fn conditionals(&self) -> &Array2<f64> {
        &self.conditionals
    }

    pub fn profile(&self) -> &BandwidthProfile {
        &self.profile
    }

    pub fn len(&self) -> usize {
        self.p.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub attract: f64,
    pub repulse: f64,
    pub data_shifted: f64,
    pub total_kl: f64,
    pub rescaled_total: Option<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_profile(data: &Dataset, profile: &BandwidthProfile) -> Result<()> {
    if data.len() < 2 {
        return Err(Error::InvalidArgument("affinities need at least 2 points".into()));
    }
    if profile.len() != data.len() {
        return Err(Error::DimensionMismatch(format!(
            "profile has {} bandwidths for {} points",
            profile.len(),
            data.len()
        )));
    }
    Ok(())
}

fn check_embedding(n: usize, emb: &Embedding) -> Result<()> {
    if emb.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "embedding has {} points, expected {n}",
            emb.len()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("embedding needs at least 2 points".into()));
    }
    Ok(())
}

/// Affinities from per-point Gaussian bandwidths, computed relative to each
/// point's nearest neighbor so that duplicated points stay finite.
pub fn affinities_p(data: &Dataset, profile: &BandwidthProfile) -> Result<AffinityMatrix> {
    check_profile(data, profile)?;
    let n = data.len();
    let mut cond = Array2::zeros((n, n));
    for (i, mut row) in cond.rows_mut().into_iter().enumerate() {
        let xi = data.point(i);
        let sigma = profile.sigmas()[i];
        let dmin = (0..n)
            .filter(|&k| k != i)
            .map(|k| sq_dist(xi, data.point(k)))
            .fold(f64::INFINITY, f64::min);
        let beta = 0.5 / (sigma * sigma);
        for k in 0..n {
            if k != i {
                row[k] = (-beta * (sq_dist(xi, data.point(k)) - dmin)).exp();
            }
        }
        let z: f64 = row.sum();
        row.mapv_inplace(|w| w / z);
    }
    let scale = 0.5 / n as f64;
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[[i, j]] = (cond[[i, j]] + cond[[j, i]]) * scale;
            }
        }
    }
    Ok(AffinityMatrix {
        p,
        conditionals: cond,
        profile: profile.clone(),
    })
}

/// Off-diagonal sum `Σ_{k≠l} (1 + |y_k - y_l|²)^{-1}`.
fn kernel_sum(y: &Array2<f64>) -> f64 {
    let n = y.nrows();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let yi = y.row(i);
            let yi = yi.as_slice().expect("standard layout");
            (i + 1..n)
                .map(|j| 1.0 / (1.0 + sq_dist(yi, y.row(j).as_slice().expect("standard layout"))))
                .sum::<f64>()
        })
        .collect();
    2.0 * rows.iter().sum::<f64>()
}

/// Student-t affinities `q_ij`, zero on the diagonal.
pub fn affinities_q(emb: &Embedding) -> Result<Array2<f64>> {
    let n = emb.len();
    if n < 2 {
        return Err(Error::InvalidArgument("embedding needs at least 2 points".into()));
    }
    let mut q = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                q[[i, j]] = 1.0 / (1.0 + sq_dist(emb.point(i), emb.point(j)));
            }
        }
    }
    let s: f64 = q.sum();
    q.mapv_inplace(|v| v / s);
    Ok(q)
}

/// `Σ_{i≠j} p_ij log(p_ij / q_ij)` with `0 log 0 = 0`.
pub fn kl_energy(affinities: &AffinityMatrix, emb: &Embedding) -> Result<f64> {
    let n = affinities.len();
    check_embedding(n, emb)?;
    let q = affinities_q(emb)?;
    let mut kl = 0.0;
    for ((i, j), &p) in affinities.p.indexed_iter() {
        if i != j && p > 0.0 {
            kl += p * (p / q[[i, j]]).ln();
        }
    }
    Ok(kl)
}

/// Decomposition with the canonical repulsion convention.
pub fn decompose(data: &Dataset, profile: &BandwidthProfile, emb: &Embedding) -> Result<EnergyBreakdown> {
    decompose_affinities(&affinities_p(data, profile)?, emb, RepulsionConvention::Canonical)
}

/// Decomposition from precomputed affinities.
pub fn decompose_affinities(
    affinities: &AffinityMatrix,
    emb: &Embedding,
    convention: RepulsionConvention,
) -> Result<EnergyBreakdown> {
    let n = affinities.len();
    check_embedding(n, emb)?;
    let mut attract = 0.0;
    for ((i, j), &c) in affinities.conditionals.indexed_iter() {
        if i != j && c > 0.0 {
            attract += c * sq_dist(emb.point(i), emb.point(j)).ln_1p();
        }
    }
    attract /= n as f64;
    let repulse = convention.log_mean(kernel_sum(emb.y()), n);
    let entropy: f64 = affinities.p.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum();
    let data_shifted = entropy + 2.0 * (n as f64).ln();
    let h = affinities.profile.h();
    Ok(EnergyBreakdown {
        attract,
        repulse,
        data_shifted,
        total_kl: kl_energy(affinities, emb)?,
        rescaled_total: Some(attract / (h * h) + repulse),
    })
}

/// `A_n / h² + R*_n`.
pub fn rescaled_energy(data: &Dataset, profile: &BandwidthProfile, emb: &Embedding) -> Result<f64> {
    let b = decompose(data, profile, emb)?;
    let h = profile.h();
    Ok(b.attract / (h * h) + b.repulse)
}

/// Attraction `A_n` without forming the affinity matrix.
///
/// Only neighbors whose relative kernel weight is representable are visited,
/// so the result equals the dense computation.
pub fn attraction(data: &Dataset, profile: &BandwidthProfile, emb: &Embedding) -> Result<f64> {
    check_profile(data, profile)?;
    check_embedding(data.len(), emb)?;
    let index = AxisIndex::new(data);
    let rows: Vec<f64> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let sigma = profile.sigmas()[i];
            let beta = 0.5 / (sigma * sigma);
            let dmin = index.nearest_sq(i);
            let (mut z, mut num) = (0.0, 0.0);
            let yi = emb.point(i);
            index.for_each_within(i, support_radius_sq(dmin, sigma), |k, d| {
                let w = (-beta * (d - dmin)).exp();
                z += w;
                num += w * sq_dist(yi, emb.point(k)).ln_1p();
            });
            num / z
        })
        .collect();
    Ok(rows.iter().sum::<f64>() / data.len() as f64)
}

/// Repulsion `log(normalizer / n²)` without forming the kernel matrix.
pub fn repulsion(emb: &Embedding, convention: RepulsionConvention) -> Result<f64> {
    if emb.len() < 2 {
        return Err(Error::InvalidArgument("embedding needs at least 2 points".into()));
    }
    Ok(convention.log_mean(kernel_sum(emb.y()), emb.len()))
}

/// Attraction and repulsion energies and gradients at one configuration.
#[derive(Debug, Clone)]
pub(crate) struct Forces {
    /// `A_n`, computed only when requested.
    pub attract: Option<f64>,
    pub repulse: f64,
    pub grad_attract: Array2<f64>,
    pub grad_repulse: Array2<f64>,
}

/// Fused pass over pairs `i < j`.
pub(crate) fn pair_forces(
    p: &Array2<f64>,
    y: &Array2<f64>,
    convention: RepulsionConvention,
    with_energy: bool,
) -> Forces {
    let (n, m) = y.dim();
    let ys = y.as_slice().expect("standard layout");
    let ps = p.as_slice().expect("standard layout");
    let mut ga = vec![0.0; n * m];
    let mut gr = vec![0.0; n * m];
    let (s, a) = match m {
        1 => pair_loop::<1>(ps, ys, &mut ga, &mut gr, with_energy),
        2 => pair_loop::<2>(ps, ys, &mut ga, &mut gr, with_energy),
        3 => pair_loop::<3>(ps, ys, &mut ga, &mut gr, with_energy),
        _ => pair_loop_dyn(ps, ys, m, &mut ga, &mut gr, with_energy),
    };
    let s = 2.0 * s;
    let scale = -4.0 / convention.normalizer(s, n);
    gr.iter_mut().for_each(|v| *v *= scale);
    Forces {
        attract: with_energy.then_some(2.0 * a),
        repulse: convention.log_mean(s, n),
        grad_attract: Array2::from_shape_vec((n, m), ga).expect("shape"),
        grad_repulse: Array2::from_shape_vec((n, m), gr).expect("shape"),
    }
}

/// Returns `(Σ_{i<j} w_ij, Σ_{i<j} p_ij log(1 + d²_ij))`.
fn pair_loop<const M: usize>(
    ps: &[f64],
    ys: &[f64],
    ga: &mut [f64],
    gr: &mut [f64],
    with_energy: bool,
) -> (f64, f64) {
    let n = ys.len() / M;
    let pts: &[[f64; M]] = as_points(ys);
    let mut ga_rows = vec![[0.0; M]; n];
    let mut gr_rows = vec![[0.0; M]; n];
    let (mut s, mut a) = (0.0, 0.0);
    for i in 0..n {
        let yi = pts[i];
        let prow = &ps[i * n + i + 1..(i + 1) * n];
        let (mut gai, mut gri) = ([0.0; M], [0.0; M]);
        let mut si = 0.0;
        for ((yj, &pij), (gaj, grj)) in pts[i + 1..]
            .iter()
            .zip(prow)
            .zip(ga_rows[i + 1..].iter_mut().zip(gr_rows[i + 1..].iter_mut()))
        {
            let mut diff = [0.0; M];
            let mut d2 = 0.0;
            for k in 0..M {
                diff[k] = yi[k] - yj[k];
                d2 += diff[k] * diff[k];
            }
            let w = 1.0 / (1.0 + d2);
            si += w;
            if with_energy && pij > 0.0 {
                a += pij * d2.ln_1p();
            }
            let ca = 4.0 * pij * w;
            let cr = w * w;
            for k in 0..M {
                gai[k] += ca * diff[k];
                gaj[k] -= ca * diff[k];
                gri[k] += cr * diff[k];
                grj[k] -= cr * diff[k];
            }
        }
        s += si;
        for k in 0..M {
            ga_rows[i][k] += gai[k];
            gr_rows[i][k] += gri[k];
        }
    }
    for i in 0..n {
        ga[i * M..(i + 1) * M].copy_from_slice(&ga_rows[i]);
        gr[i * M..(i + 1) * M].copy_from_slice(&gr_rows[i]);
    }
    (s, a)
}

fn as_points<const M: usize>(ys: &[f64]) -> &[[f64; M]] {
    let (chunks, rest) = ys.as_chunks::<M>();
    debug_assert!(rest.is_empty());
    chunks
}

fn pair_loop_dyn(ps: &[f64], ys: &[f64], m: usize, ga: &mut [f64], gr: &mut [f64], with_energy: bool) -> (f64, f64) {
    let n = ys.len() / m;
    let mut diff = vec![0.0; m];
    let (mut s, mut a) = (0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let mut d2 = 0.0;
            for k in 0..m {
                diff[k] = ys[i * m + k] - ys[j * m + k];
                d2 += diff[k] * diff[k];
            }
            let w = 1.0 / (1.0 + d2);
            s += w;
            let pij = ps[i * n + j];
            if with_energy && pij > 0.0 {
                a += pij * d2.ln_1p();
            }
            let ca = 4.0 * pij * w;
            let cr = w * w;
            for k in 0..m {
                ga[i * m + k] += ca * diff[k];
                ga[j * m + k] -= ca * diff[k];
                gr[i * m + k] += cr * diff[k];
                gr[j * m + k] -= cr * diff[k];
            }
        }
    }
    (s, a)
}

/// Gradient of `A_n + R*_n` (classic) or `A_n / h² + R*_n` (rescaled).
pub fn grad_discrete(
    data: &Dataset,
    profile: &BandwidthProfile,
    emb: &Embedding,
    variant: Variant,
) -> Result<Array2<f64>> {
    let affinities = affinities_p(data, profile)?;
    grad_affinities(&affinities, emb, variant, RepulsionConvention::Canonical)
}

/// Gradient from precomputed affinities.
pub fn grad_affinities(
    affinities: &AffinityMatrix,
    emb: &Embedding,
    variant: Variant,
    convention: RepulsionConvention,
) -> Result<Array2<f64>> {
    check_embedding(affinities.len(), emb)?;
    let f = pair_forces(&affinities.p, emb.y(), convention, false);
    let scale = attraction_scale(variant, affinities.profile.h());
    Ok(f.grad_attract * scale + f.grad_repulse)
}

/// Factor multiplying the attraction: `1` or `1/h²`.
pub fn attraction_scale(variant: Variant, h: f64) -> f64 {
    match variant {
        Variant::Classic => 1.0,
        Variant::Rescaled => 1.0 / (h * h),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandwidth::ProfileMode;
    use ndarray::array;

    fn line(xs: &[f64]) -> Dataset {
        Dataset::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
    }

    fn emb(rows: &[&[f64]]) -> Embedding {
        let m = rows[0].len();
        Embedding::new(Array2::from_shape_vec((rows.len(), m), rows.concat()).unwrap()).unwrap()
    }

    fn unit_profile(n: usize, h: f64) -> BandwidthProfile {
        BandwidthProfile::new(vec![1.0; n], h, 1.0, ProfileMode::Calibrated).unwrap()
    }

    #[test]
    fn two_points_have_unit_conditionals() {
        let a = affinities_p(&line(&[0.0, 1.0]), &unit_profile(2, 1.0)).unwrap();
        assert_eq!(a.conditionals()[[0, 1]], 1.0);
        assert_eq!(a.p()[[0, 1]], 0.5);
        assert_eq!(a.p()[[1, 0]], 0.5);
    }

    #[test]
    fn equidistant_points_share_affinity() {
        let s3 = 3f64.sqrt() / 2.0;
        let data = Dataset::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, s3]]).unwrap();
        let a = affinities_p(&data, &unit_profile(3, 1.0)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.0 } else { 1.0 / 6.0 };
                assert!((a.p()[[i, j]] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn affinities_match_direct_summation() {
        let xs = [0.0, 1.0, 3.0];
        let a = affinities_p(&line(&xs), &unit_profile(3, 1.0)).unwrap();
        let cond = |i: usize, j: usize| {
            let k = |a: f64, b: f64| (-(a - b) * (a - b) / 2.0).exp();
            let z: f64 = (0..3).filter(|&l| l != i).map(|l| k(xs[i], xs[l])).sum();
            k(xs[i], xs[j]) / z
        };
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    let want = (cond(i, j) + cond(j, i)) / 6.0;
                    assert!((a.p()[[i, j]] - want).abs() < 1e-12);
                }
            }
        }
        assert!((a.p().sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_points_stay_finite() {
        let a = affinities_p(&line(&[0.5, 0.5, 0.5, 2.0]), &unit_profile(4, 1.0)).unwrap();
        assert!(a.p().iter().all(|v| v.is_finite()));
        assert!((a.p().sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn q_examples() {
        let q = affinities_q(&emb(&[&[0.0], &[5.0]])).unwrap();
        assert_eq!(q[[0, 1]], 0.5);
        let q = affinities_q(&emb(&[&[1.0], &[1.0], &[1.0]])).unwrap();
        assert!((q[[0, 2]] - 1.0 / 6.0).abs() < 1e-15);
        let q = affinities_q(&emb(&[&[0.0], &[1.0], &[2.0]])).unwrap();
        assert!((q[[0, 1]] - 0.5 / 2.4).abs() < 1e-15);
        assert!((q[[0, 1]] - 0.2083333333333333).abs() < 1e-15);
    }

    #[test]
    fn kl_zero_for_matching_pair_and_by_hand() {
        let a = affinities_p(&line(&[0.0, 1.0]), &unit_profile(2, 1.0)).unwrap();
        assert_eq!(kl_energy(&a, &emb(&[&[0.0], &[3.0]])).unwrap(), 0.0);

        let a = affinities_p(&line(&[0.0, 1.0, 3.0]), &unit_profile(3, 1.0)).unwrap();
        let y = [0.0, 1.0, 2.0];
        let w = |i: usize, j: usize| 1.0 / (1.0 + (y[i] - y[j]) * (y[i] - y[j]));
        let mut want = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    let p = a.p()[[i, j]];
                    want += p * (p / (w(i, j) / 2.4)).ln();
                }
            }
        }
        let got = kl_energy(&a, &emb(&[&[0.0], &[1.0], &[2.0]])).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn decomposition_examples() {
        let data = line(&[0.0, 1.0]);
        let b = decompose(&data, &unit_profile(2, 1.0), &emb(&[&[0.0], &[1.0]])).unwrap();
        assert!((b.attract - 2f64.ln()).abs() < 1e-15);
        assert!((b.attract - std::f64::consts::LN_2).abs() < 1e-6);

        let data = line(&[0.0, 0.4, 1.1, 2.0]);
        let b = decompose(&data, &unit_profile(4, 1.0), &emb(&[&[3.0], &[3.0], &[3.0], &[3.0]])).unwrap();
        assert_eq!(b.attract, 0.0);
        assert!((b.repulse - (12.0f64 / 16.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn rescaled_energy_examples() {
        let data = line(&[0.0, 1.0]);
        let y = emb(&[&[0.0], &[1.0]]);
        let b = decompose(&data, &unit_profile(2, 0.1), &y).unwrap();
        let r = rescaled_energy(&data, &unit_profile(2, 0.1), &y).unwrap();
        assert!((r - (100.0 * b.attract + b.repulse)).abs() < 1e-12);
        assert!((r - (100.0 * 2f64.ln() + 0.25f64.ln())).abs() < 1e-12);
        let h1 = rescaled_energy(&data, &unit_profile(2, 1.0), &y).unwrap();
        assert!((h1 - (b.attract + b.repulse)).abs() < 1e-15);
    }

    #[test]
    fn inclusive_convention_counts_diagonal() {
        let y = emb(&[&[0.0], &[1.0]]);
        let inc = repulsion(&y, RepulsionConvention::Inclusive).unwrap();
        assert!((inc - ((2.0 * 0.5 + 2.0) / 4.0f64).ln()).abs() < 1e-15);
        assert!((repulsion(&y, RepulsionConvention::Canonical).unwrap() - 0.25f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn constant_embedding_has_zero_gradient() {
        let data = line(&[0.0, 0.3, 0.9]);
        let y = emb(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
        for v in [Variant::Classic, Variant::Rescaled] {
            let g = grad_discrete(&data, &unit_profile(3, 0.5), &y, v).unwrap();
            assert!(g.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn streaming_terms_match_dense() {
        let data = crate::density::Density::uniform(crate::density::Domain::unit(2))
            .unwrap()
            .sample(200, 3)
            .unwrap();
        let profile = BandwidthProfile::constant(200, 0.05, 0.2, 1.0).unwrap();
        let map = SmoothMap::sinusoid(vec![1.0], vec![vec![3.0, 1.0]], vec![0.2]).unwrap();
        let y = Embedding::from_map(&map, &data).unwrap();
        let b = decompose(&data, &profile, &y).unwrap();
        let a = attraction(&data, &profile, &y).unwrap();
        assert!((a - b.attract).abs() <= 1e-12 * b.attract);
        assert!((repulsion(&y, RepulsionConvention::Canonical).unwrap() - b.repulse).abs() < 1e-12);
    }

    #[test]
    fn fused_energy_matches_decomposition() {
        let data = line(&[0.0, 0.2, 0.7, 1.5, 1.6]);
        let profile = BandwidthProfile::new(vec![0.3, 0.5, 0.4, 0.6, 0.2], 0.5, 1.0, ProfileMode::Calibrated).unwrap();
        let a = affinities_p(&data, &profile).unwrap();
        let y = array![[0.0, 1.0], [0.5, -0.2], [1.0, 0.3], [2.0, 2.0], [-1.0, 0.4]];
        let f = pair_forces(a.p(), &y, RepulsionConvention::Canonical, true);
        let b = decompose_affinities(&a, &Embedding::new(y).unwrap(), RepulsionConvention::Canonical).unwrap();
        assert!((f.attract.unwrap() - b.attract).abs() < 1e-14);
        assert!((f.repulse - b.repulse).abs() < 1e-14);
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("rescaled".parse::<Variant>().unwrap(), Variant::Rescaled);
        assert!("other".parse::<Variant>().is_err());
        assert_eq!(Variant::Classic.to_string(), "classic");
    }
}
