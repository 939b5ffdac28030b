//! Momentum gradient descent on the discrete energies and on grid-discretized
//! continuum energies, with early exaggeration and trace logging.

use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bandwidth::{calibrate_profile, scale_for, BandwidthProfile};
use crate::continuum::{GridEnergy, GridMap};
use crate::density::{Dataset, Density, Domain};
use crate::energy::{
    affinities_p, attraction_scale, decompose_affinities, grad_affinities, pair_forces, AffinityMatrix,
    Embedding, RepulsionConvention, Variant,
};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureGrid;

/// Consecutive energy increases (in steps) treated as divergence.
pub const DIVERGENCE_STEPS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Init {
    /// I.i.d. `N(0, scale²)` coordinates.
    Gaussian { scale: f64, seed: u64 },
    /// Projection onto the leading principal axes, scaled so the first
    /// coordinate has RMS `scale`.
    PcaLike { scale: f64 },
    /// Explicit starting values, one row per point or node.
    Given { y: Vec<Vec<f64>> },
}

impl Default for Init {
    fn default() -> Self {
        Init::Gaussian { scale: 1e-2, seed: 0 }
    }
}

/// How `learning_rate` turns into a step on the raw gradient of the discrete energy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrScaling {
    /// Step `lr · n · ∇E` (times `h²` for the rescaled variant), which makes
    /// per-point forces O(1) and keeps the stiff `1/h²` attraction stable.
    #[default]
    PerSample,
    /// Step `lr · ∇E`.
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub exaggeration_factor: f64,
    pub exaggeration_steps: usize,
    pub init: Init,
    /// Stop once the largest per-point gradient norm drops to this value.
    pub convergence_tol: f64,
    /// Embedding dimension `m`.
    pub dim: usize,
    pub record_every: usize,
    pub repulsion: RepulsionConvention,
    pub lr_scaling: LrScaling,
    /// Zero the velocity whenever it points uphill (`⟨∇E, v⟩ > 0`).
    pub restart: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            learning_rate: 1.0,
            momentum: 0.5,
            exaggeration_factor: 1.0,
            exaggeration_steps: 0,
            init: Init::default(),
            convergence_tol: 1e-10,
            dim: 2,
            record_every: 10,
            repulsion: RepulsionConvention::Canonical,
            lr_scaling: LrScaling::PerSample,
            restart: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.steps == 0 {
            return bad("steps must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.exaggeration_factor >= 1.0) {
            return bad("exaggeration_factor must be at least 1");
        }
        if self.exaggeration_steps > self.steps {
            return bad("exaggeration_steps cannot exceed steps");
        }
        if !(self.convergence_tol > 0.0) {
            return bad("convergence_tol must be positive");
        }
        if self.dim == 0 || self.record_every == 0 {
            return bad("dim and record_every must be positive");
        }
        match &self.init {
            Init::Gaussian { scale, .. } | Init::PcaLike { scale } if !(scale.is_finite() && *scale >= 0.0) => {
                bad("init scale must be nonnegative")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub attract: f64,
    pub repulse: f64,
    /// The objective being minimized (`attract · scale + repulse`).
    pub total: f64,
    pub grad_norm: f64,
    pub diameter: f64,
    pub rms_spread: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizationTrace {
    pub records: Vec<TraceRecord>,
    /// Whether the gradient tolerance was reached before the step budget ran out.
    pub converged: bool,
}

impl OptimizationTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// CSV with header `step,attract,repulse,total,grad_norm,diameter,rms_spread`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        if self.records.is_empty() {
            w.write_record(["step", "attract", "repulse", "total", "grad_norm", "diameter", "rms_spread"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let records = r.deserialize().collect::<std::result::Result<Vec<TraceRecord>, _>>()?;
        Ok(Self {
            records,
            converged: false,
        })
    }
}

/// Largest Euclidean row norm.
fn max_row_norm(g: &Array2<f64>) -> f64 {
    g.rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .fold(0.0, f64::max)
}

fn diameter(y: &Array2<f64>) -> f64 {
    let (n, m) = y.dim();
    let ys = y.as_slice().expect("standard layout");
    let mut best = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let d2: f64 = (0..m).map(|k| (ys[i * m + k] - ys[j * m + k]).powi(2)).sum();
            best = best.max(d2);
        }
    }
    best.sqrt()
}

/// Weighted RMS distance from the weighted mean; `None` weights are uniform.
fn rms_spread(y: &Array2<f64>, weights: Option<&[f64]>) -> f64 {
    let (n, m) = y.dim();
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let mass: f64 = (0..n).map(w).sum();
    let mean: Vec<f64> = (0..m)
        .map(|k| (0..n).map(|i| w(i) * y[[i, k]]).sum::<f64>() / mass)
        .collect();
    let var: f64 = (0..n)
        .map(|i| w(i) * (0..m).map(|k| (y[[i, k]] - mean[k]).powi(2)).sum::<f64>())
        .sum();
    (var / mass).sqrt()
}

/// Public wrapper for the unweighted RMS spread of an embedding.
pub fn embedding_spread(emb: &Embedding) -> f64 {
    rms_spread(emb.y(), None)
}

/// Public wrapper for the largest pairwise distance of an embedding.
pub fn embedding_diameter(emb: &Embedding) -> f64 {
    diameter(emb.y())
}

fn gaussian_matrix(rows: usize, cols: usize, scale: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    Array2::from_shape_fn((rows, cols), |_| scale * normal.sample(&mut rng))
}

/// Weighted PCA projection of `x` onto `m` leading axes, scaled so the first
/// coordinate has weighted RMS `scale`. Extra coordinates beyond `d` are zero.
fn pca_projection(x: &Array2<f64>, weights: Option<&[f64]>, m: usize, scale: f64) -> Array2<f64> {
    let (n, d) = x.dim();
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let mass: f64 = (0..n).map(w).sum();
    let mean: Vec<f64> = (0..d)
        .map(|k| (0..n).map(|i| w(i) * x[[i, k]]).sum::<f64>() / mass)
        .collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for i in 0..n {
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += w(i) * (x[[i, a]] - mean[a]) * (x[[i, b]] - mean[b]) / mass;
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut y = Array2::zeros((n, m));
    for (col, &axis) in order.iter().take(m).enumerate() {
        let v = eig.eigenvectors.column(axis);
        // deterministic sign: the largest component is positive
        let pivot = (0..d).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            y[[i, col]] = sign * (0..d).map(|k| (x[[i, k]] - mean[k]) * v[k]).sum::<f64>();
        }
    }
    let first_rms = ((0..n).map(|i| w(i) * y[[i, 0]] * y[[i, 0]]).sum::<f64>() / mass).sqrt();
    if first_rms > 0.0 {
        y.mapv_inplace(|v| v * scale / first_rms);
    }
    y
}

fn initial_values(init: &Init, x: &Array2<f64>, weights: Option<&[f64]>, m: usize) -> Result<Array2<f64>> {
    let n = x.nrows();
    match init {
        Init::Gaussian { scale, seed } => Ok(gaussian_matrix(n, m, *scale, *seed)),
        Init::PcaLike { scale } => Ok(pca_projection(x, weights, m, *scale)),
        Init::Given { y } => {
            if y.len() != n || y.iter().any(|r| r.len() != m) {
                return Err(Error::InvalidConfig(format!("given init must be {n}x{m}")));
            }
            Ok(Array2::from_shape_vec((n, m), y.concat()).expect("shape"))
        }
    }
}

/// Heavy-ball iteration state shared by both minimizers.
struct Descent {
    velocity: Array2<f64>,
    momentum: f64,
    restart: bool,
    increases: usize,
    last_total: Option<f64>,
    patience: usize,
}

impl Descent {
    fn new(shape: (usize, usize), config: &OptimizerConfig) -> Self {
        Self {
            velocity: Array2::zeros(shape),
            momentum: config.momentum,
            restart: config.restart,
            increases: 0,
            last_total: None,
            patience: DIVERGENCE_STEPS.div_ceil(config.record_every),
        }
    }

    fn step(&mut self, values: &mut Array2<f64>, grad: &Array2<f64>, rate: f64) {
        if self.restart && (&self.velocity * grad).sum() > 0.0 {
            self.velocity.fill(0.0);
        }
        self.velocity *= self.momentum;
        self.velocity.scaled_add(-rate, grad);
        *values += &self.velocity;
    }

    /// Tracks consecutive recorded increases after the exaggeration window.
    fn observe(&mut self, step: usize, total: f64, monitored: bool) -> Result<()> {
        if !total.is_finite() {
            return Err(Error::NonFinite { what: "energy", step });
        }
        if monitored {
            if let Some(prev) = self.last_total {
                if total > prev + 1e-12 * prev.abs().max(1.0) {
                    self.increases += 1;
                } else {
                    self.increases = 0;
                }
                if self.increases >= self.patience {
                    return Err(Error::Diverging {
                        step,
                        steps: DIVERGENCE_STEPS,
                    });
                }
            }
            self.last_total = Some(total);
        }
        Ok(())
    }
}

/// Discrete objective `scale · A_n + R_n` for fixed affinities.
#[derive(Debug, Clone)]
pub struct DiscreteObjective {
    affinities: AffinityMatrix,
    variant: Variant,
    convention: RepulsionConvention,
}

/// Energies and gradient parts at one configuration.
#[derive(Debug, Clone)]
pub struct DiscreteEvaluation {
    pub attract: f64,
    pub repulse: f64,
    pub total: f64,
    /// Gradient of `A_n` (unscaled).
    pub grad_attract: Array2<f64>,
    pub grad_repulse: Array2<f64>,
}

impl DiscreteObjective {
    pub fn new(data: &Dataset, profile: &BandwidthProfile, variant: Variant, convention: RepulsionConvention) -> Result<Self> {
        Ok(Self {
            affinities: affinities_p(data, profile)?,
            variant,
            convention,
        })
    }

    pub fn affinities(&self) -> &AffinityMatrix {
        &self.affinities
    }

    /// `1` for classic, `1/h²` for rescaled.
    pub fn scale(&self) -> f64 {
        attraction_scale(self.variant, self.affinities.profile().h())
    }

    pub fn evaluate(&self, y: &Array2<f64>) -> DiscreteEvaluation {
        let f = pair_forces(self.affinities.p(), y, self.convention, true);
        let attract = f.attract.expect("requested");
        DiscreteEvaluation {
            attract,
            repulse: f.repulse,
            total: self.scale() * attract + f.repulse,
            grad_attract: f.grad_attract,
            grad_repulse: f.grad_repulse,
        }
    }

    /// Objective value through the independent decomposition route.
    pub fn energy(&self, y: &Array2<f64>) -> Result<f64> {
        let b = decompose_affinities(&self.affinities, &Embedding::new(y.clone())?, self.convention)?;
        Ok(self.scale() * b.attract + b.repulse)
    }

    pub fn gradient(&self, y: &Array2<f64>) -> Result<Array2<f64>> {
        grad_affinities(&self.affinities, &Embedding::new(y.clone())?, self.variant, self.convention)
    }

    /// Gradient applied at `step`: `α · scale · ∇A + ∇R` inside the exaggeration window.
    pub fn applied_gradient(&self, y: &Array2<f64>, step: usize, config: &OptimizerConfig) -> Array2<f64> {
        let f = pair_forces(self.affinities.p(), y, self.convention, false);
        let alpha = if step < config.exaggeration_steps {
            config.exaggeration_factor
        } else {
            1.0
        };
        f.grad_attract * (alpha * self.scale()) + f.grad_repulse
    }
}

/// Momentum descent on the classic or rescaled discrete energy.
pub fn minimize_discrete(
    data: &Dataset,
    profile: &BandwidthProfile,
    variant: Variant,
    config: &OptimizerConfig,
) -> Result<(Embedding, OptimizationTrace)> {
    config.validate()?;
    let objective = DiscreteObjective::new(data, profile, variant, config.repulsion)?;
    let y0 = initial_values(&config.init, data.points(), None, config.dim)?;
    let (y, trace) = minimize_objective(&objective, y0, config)?;
    Ok((Embedding::new(y)?, trace))
}

/// Momentum descent from explicit starting values.
pub fn minimize_objective(
    objective: &DiscreteObjective,
    mut y: Array2<f64>,
    config: &OptimizerConfig,
) -> Result<(Array2<f64>, OptimizationTrace)> {
    config.validate()?;
    let n = y.nrows();
    if n != objective.affinities.len() {
        return Err(Error::DimensionMismatch(format!(
            "starting values have {n} rows, affinities have {}",
            objective.affinities.len()
        )));
    }
    let scale = objective.scale();
    let rate = match config.lr_scaling {
        LrScaling::PerSample => config.learning_rate * n as f64 / scale,
        LrScaling::Absolute => config.learning_rate,
    };
    let mut descent = Descent::new(y.dim(), config);
    let mut trace = OptimizationTrace::default();
    for step in 0..=config.steps {
        let record = step % config.record_every == 0 || step == config.steps;
        let f = pair_forces(objective.affinities.p(), &y, config.repulsion, record);
        let exaggerating = step < config.exaggeration_steps;
        let alpha = if exaggerating { config.exaggeration_factor } else { 1.0 };
        let grad = &f.grad_attract * scale + &f.grad_repulse;
        let grad_norm = max_row_norm(&grad);
        if !grad_norm.is_finite() {
            return Err(Error::NonFinite { what: "gradient", step });
        }
        let done = !exaggerating && grad_norm <= config.convergence_tol;
        if record || done {
            let attract = f.attract.unwrap_or_else(|| {
                pair_forces(objective.affinities.p(), &y, config.repulsion, true).attract.expect("requested")
            });
            let total = scale * attract + f.repulse;
            trace.records.push(TraceRecord {
                step,
                attract,
                repulse: f.repulse,
                total,
                grad_norm,
                diameter: diameter(&y),
                rms_spread: rms_spread(&y, None),
            });
            descent.observe(step, total, !exaggerating)?;
        }
        if done {
            trace.converged = true;
            break;
        }
        if step == config.steps {
            break;
        }
        let applied = if exaggerating {
            &f.grad_attract * (alpha * scale) + &f.grad_repulse
        } else {
            grad
        };
        descent.step(&mut y, &applied, rate);
    }
    Ok((y, trace))
}

/// Momentum descent on the grid-discretized continuum energy.
///
/// The L² gradient (`∂E/∂T_g / w`) is used. `learning_rate` is a fraction of
/// the explicit heavy-ball stability limit `2(1+β)/λ`, where `λ` bounds the
/// Dirichlet Hessian. The result is centered at its ρ-weighted mean.
pub fn minimize_gridmap(
    density: &Density,
    kappa: f64,
    counts: &[usize],
    config: &OptimizerConfig,
) -> Result<(GridMap, OptimizationTrace)> {
    let start = initial_gridmap(density, counts, config)?;
    minimize_gridmap_from(density, kappa, start, config)
}

/// Starting map used by [`minimize_gridmap`]: `config.init` applied to the
/// grid nodes, with PCA weighted by ρ.
pub fn initial_gridmap(density: &Density, counts: &[usize], config: &OptimizerConfig) -> Result<GridMap> {
    config.validate()?;
    if counts.iter().any(|&c| c < 3) {
        return Err(Error::InvalidArgument("grid needs at least 3 nodes per axis".into()));
    }
    let grid = QuadratureGrid::new(density.domain(), counts)?;
    let rho: Vec<f64> = (0..grid.len()).map(|g| density.value(grid.node(g))).collect();
    let t0 = initial_values(&config.init, grid.nodes(), Some(&rho), config.dim)?;
    GridMap::new(grid, t0)
}

/// [`minimize_gridmap`] from an explicit starting map.
pub fn minimize_gridmap_from(
    density: &Density,
    kappa: f64,
    mut start: GridMap,
    config: &OptimizerConfig,
) -> Result<(GridMap, OptimizationTrace)> {
    config.validate()?;
    let grid = start.grid().clone();
    if grid.counts().iter().any(|&c| c < 3) {
        return Err(Error::InvalidArgument("grid needs at least 3 nodes per axis".into()));
    }
    let energy = GridEnergy::new(density, kappa, &grid)?;
    let rho: Vec<f64> = (0..grid.len()).map(|g| density.value(grid.node(g))).collect();
    let trace = descend_gridmap(&energy, &mut start, &rho, config)?;
    start.center(density);
    Ok((start, trace))
}

fn descend_gridmap(
    energy: &GridEnergy,
    gm: &mut GridMap,
    rho: &[f64],
    config: &OptimizerConfig,
) -> Result<OptimizationTrace> {
    let w = energy.grid().weight();
    let lambda = energy.stiffness().max(1e-300);
    let rate = config.learning_rate * 2.0 * (1.0 + config.momentum) / lambda;
    let mut descent = Descent::new(gm.values().dim(), config);
    let mut trace = OptimizationTrace::default();
    for step in 0..=config.steps {
        let e = energy.evaluate(gm.values(), true)?;
        let ga = e.grad_attract.expect("requested") / w;
        let gr = e.grad_repulse.expect("requested") / w;
        let exaggerating = step < config.exaggeration_steps;
        let grad = &ga + &gr;
        let grad_norm = max_row_norm(&grad);
        if !grad_norm.is_finite() {
            return Err(Error::NonFinite { what: "gradient", step });
        }
        let done = !exaggerating && grad_norm <= config.convergence_tol;
        if step % config.record_every == 0 || step == config.steps || done {
            let total = e.attract + e.repulse;
            trace.records.push(TraceRecord {
                step,
                attract: e.attract,
                repulse: e.repulse,
                total,
                grad_norm,
                diameter: diameter(gm.values()),
                rms_spread: rms_spread(gm.values(), Some(rho)),
            });
            descent.observe(step, total, !exaggerating)?;
        }
        if done {
            trace.converged = true;
            break;
        }
        if step == config.steps {
            break;
        }
        let applied = if exaggerating {
            ga * config.exaggeration_factor + gr
        } else {
            grad
        };
        descent.step(gm.values_mut(), &applied, rate);
    }
    Ok(trace)
}

/// Which gradient [`gradcheck`] verifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradTarget {
    DiscreteClassic,
    DiscreteRescaled,
    Gridmap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub target: GradTarget,
    pub seed: u64,
    pub step: f64,
    /// `max |g - g_fd| / max |g|` over all entries.
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Pass threshold for [`gradcheck`].
pub const GRADCHECK_TOL: f64 = 1e-5;

/// Compares analytic gradients with central differences on a seeded instance:
/// 16 points in `[0,1]²` embedded in `R²` for the discrete targets, a 16-node
/// grid on `[0,1]` with a two-tile density for the grid target.
pub fn gradcheck(target: GradTarget, seed: u64, step: f64) -> Result<GradcheckReport> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let (analytic, numeric) = match target {
        GradTarget::DiscreteClassic | GradTarget::DiscreteRescaled => {
            let variant = if target == GradTarget::DiscreteClassic {
                Variant::Classic
            } else {
                Variant::Rescaled
            };
            let n = 16;
            let data = Density::uniform(Domain::unit(2))?.sample(n, seed)?;
            let profile = calibrate_profile(&data, 1.0, scale_for(n, 2, 1.0), 1e-10)?;
            let objective = DiscreteObjective::new(&data, &profile, variant, RepulsionConvention::Canonical)?;
            let y = gaussian_matrix(n, 2, 1.0, seed ^ 0x5eed);
            let analytic = objective.gradient(&y)?;
            let numeric = central_differences(&y, step, |v| objective.energy(v))?;
            (analytic, numeric)
        }
        GradTarget::Gridmap => {
            let density = Density::tiles(Domain::unit(1), vec![2], vec![0.5, 1.5])?;
            let grid = QuadratureGrid::uniform(density.domain(), 16)?;
            let energy = GridEnergy::new(&density, 1.0, &grid)?;
            let t = gaussian_matrix(grid.len(), 1, 1.0, seed);
            let analytic = energy.gradient(&t)?;
            let numeric = central_differences(&t, step, |v| energy.energy(v))?;
            (analytic, numeric)
        }
    };
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let err = analytic
        .iter()
        .zip(numeric.iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let max_rel_error = err / scale;
    Ok(GradcheckReport {
        target,
        seed,
        step,
        max_rel_error,
        passed: max_rel_error <= GRADCHECK_TOL,
    })
}

fn central_differences<F>(x: &Array2<f64>, step: f64, f: F) -> Result<Array2<f64>>
where
    F: Fn(&Array2<f64>) -> Result<f64>,
{
    let mut probe = x.clone();
    let mut out = Array2::zeros(x.dim());
    for idx in 0..x.len() {
        let (i, j) = (idx / x.ncols(), idx % x.ncols());
        let orig = probe[[i, j]];
        probe[[i, j]] = orig + step;
        let plus = f(&probe)?;
        probe[[i, j]] = orig - step;
        let minus = f(&probe)?;
        probe[[i, j]] = orig;
        out[[i, j]] = (plus - minus) / (2.0 * step);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandwidth::ProfileMode;
    use crate::continuum::{el_residual, max_norm, ElForm};
    use crate::smooth_map::SmoothMap;

    fn two_points() -> (Dataset, BandwidthProfile) {
        let data = Dataset::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let profile = BandwidthProfile::new(vec![1.0, 1.0], 1.0, 1.0, ProfileMode::Calibrated).unwrap();
        (data, profile)
    }

    #[test]
    fn two_point_minimizer_matches_line_search() {
        let (data, profile) = two_points();
        let config = OptimizerConfig {
            steps: 2000,
            dim: 1,
            learning_rate: 0.2,
            init: Init::Given { y: vec![vec![-0.5], vec![0.5]] },
            repulsion: RepulsionConvention::Inclusive,
            ..Default::default()
        };
        let (emb, _) = minimize_discrete(&data, &profile, Variant::Classic, &config).unwrap();
        let s = (emb.point(0)[0] - emb.point(1)[0]).abs();
        // independent oracle: brute-force scan of the scalar energy
        let f = |s: f64| (1.0 + s * s).ln() + ((2.0 / (1.0 + s * s) + 2.0) / 4.0).ln();
        let best = (0..=100_000)
            .map(|k| 3.0 * k as f64 / 100_000.0)
            .min_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap();
        assert!((s - best).abs() < 1e-3, "{s} vs {best}");
    }

    fn small_instance() -> (Dataset, BandwidthProfile) {
        let data = Density::uniform(Domain::unit(2)).unwrap().sample(40, 9).unwrap();
        let profile = calibrate_profile(&data, 1.0, scale_for(40, 2, 1.0), 1e-8).unwrap();
        (data, profile)
    }

    #[test]
    fn empty_exaggeration_window_is_inert() {
        let (data, profile) = small_instance();
        let base = OptimizerConfig {
            steps: 60,
            ..Default::default()
        };
        let other = OptimizerConfig {
            exaggeration_factor: 4.0,
            ..base.clone()
        };
        let a = minimize_discrete(&data, &profile, Variant::Classic, &base).unwrap();
        let b = minimize_discrete(&data, &profile, Variant::Classic, &other).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn rescaled_with_unit_h_matches_classic() {
        let (data, profile) = small_instance();
        let profile = profile.with_h(1.0).unwrap();
        let config = OptimizerConfig {
            steps: 50,
            ..Default::default()
        };
        let a = minimize_discrete(&data, &profile, Variant::Classic, &config).unwrap();
        let b = minimize_discrete(&data, &profile, Variant::Rescaled, &config).unwrap();
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn exaggerated_gradient_is_scaled_attraction_plus_repulsion() {
        let (data, profile) = small_instance();
        let obj = DiscreteObjective::new(&data, &profile, Variant::Rescaled, RepulsionConvention::Canonical).unwrap();
        let y = gaussian_matrix(40, 2, 1.0, 3);
        let config = OptimizerConfig {
            exaggeration_factor: 12.0,
            exaggeration_steps: 10,
            ..Default::default()
        };
        let e = obj.evaluate(&y);
        let want = &e.grad_attract * (12.0 * obj.scale()) + &e.grad_repulse;
        let got = obj.applied_gradient(&y, 3, &config);
        assert!(max_norm(&(&got - &want)) <= 1e-12 * max_norm(&want));
        let after = obj.applied_gradient(&y, 10, &config);
        let plain = obj.gradient(&y).unwrap();
        assert!(max_norm(&(&after - &plain)) <= 1e-12 * max_norm(&plain));
    }

    #[test]
    fn translated_init_translates_trajectory() {
        let (data, profile) = small_instance();
        let y0 = gaussian_matrix(40, 2, 0.1, 4);
        let shift = [3.0, -1.5];
        let mut y1 = y0.clone();
        for mut row in y1.rows_mut() {
            row[0] += shift[0];
            row[1] += shift[1];
        }
        let rows = |y: &Array2<f64>| y.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>();
        let config = |y: &Array2<f64>| OptimizerConfig {
            steps: 40,
            init: Init::Given { y: rows(y) },
            ..Default::default()
        };
        let (a, ta) = minimize_discrete(&data, &profile, Variant::Classic, &config(&y0)).unwrap();
        let (b, tb) = minimize_discrete(&data, &profile, Variant::Classic, &config(&y1)).unwrap();
        for (ra, rb) in ta.records.iter().zip(&tb.records) {
            assert!((ra.total - rb.total).abs() < 1e-12);
        }
        for i in 0..40 {
            for k in 0..2 {
                assert!((b.y()[[i, k]] - a.y()[[i, k]] - shift[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn trace_steps_increase_and_energies_are_finite() {
        let (data, profile) = small_instance();
        let config = OptimizerConfig {
            steps: 95,
            ..Default::default()
        };
        let (_, trace) = minimize_discrete(&data, &profile, Variant::Classic, &config).unwrap();
        assert!(trace.records.windows(2).all(|w| w[0].step < w[1].step));
        assert_eq!(trace.last().unwrap().step, 95);
        assert!(trace.records.iter().all(|r| r.total.is_finite()));
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("step,attract,repulse,total,grad_norm,diameter,rms_spread\n"));
        assert_eq!(OptimizationTrace::read_csv(&buf[..]).unwrap().records, trace.records);
    }

    #[test]
    fn huge_learning_rate_is_reported() {
        let (data, profile) = small_instance();
        let config = OptimizerConfig {
            steps: 400,
            learning_rate: 1e6,
            momentum: 0.9,
            ..Default::default()
        };
        let err = minimize_discrete(&data, &profile, Variant::Rescaled, &config).unwrap_err();
        assert!(matches!(err, Error::Diverging { .. } | Error::NonFinite { .. }), "{err}");
    }

    #[test]
    fn config_validation() {
        let bad = OptimizerConfig {
            exaggeration_steps: 10,
            steps: 5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let json = r#"{"steps": 10, "init": {"kind": "pca-like", "scale": 0.5}}"#;
        let cfg: OptimizerConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.init, Init::PcaLike { scale: 0.5 });
        assert_eq!(cfg.momentum, 0.5);
    }

    #[test]
    fn gradcheck_targets_pass() {
        for target in [GradTarget::DiscreteClassic, GradTarget::DiscreteRescaled, GradTarget::Gridmap] {
            let r = gradcheck(target, 1, 1e-5).unwrap();
            assert!(r.passed, "{target:?}: {}", r.max_rel_error);
            let coarse = gradcheck(target, 1, 1e-1).unwrap();
            assert!(coarse.max_rel_error > r.max_rel_error);
        }
    }

    #[test]
    fn pca_init_is_centered_and_scaled() {
        let x = ndarray::array![[0.0, 0.0], [2.0, 1.0], [4.0, 2.0], [6.0, 3.1]];
        let y = pca_projection(&x, None, 2, 0.5);
        assert!(y.column(0).sum().abs() < 1e-12);
        assert!((rms_spread(&y.slice(ndarray::s![.., 0..1]).to_owned(), None) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gridmap_large_kappa_collapses() {
        let rho = Density::uniform(Domain::unit(1)).unwrap();
        let config = OptimizerConfig {
            steps: 3000,
            dim: 1,
            momentum: 0.9,
            learning_rate: 0.5,
            init: Init::PcaLike { scale: 0.3 },
            ..Default::default()
        };
        let (gm, _) = minimize_gridmap(&rho, 1e6, &[32], &config).unwrap();
        assert!(gm.rms_spread(&rho) <= 1e-3);
        assert!(gm.weighted_mean(&rho)[0].abs() <= 1e-10);
    }

    #[test]
    fn gridmap_beats_best_linear_map_and_zeroes_residual() {
        let rho = Density::uniform(Domain::unit(1)).unwrap();
        let counts = [48];
        let config = OptimizerConfig {
            steps: 20_000,
            dim: 1,
            momentum: 0.95,
            learning_rate: 0.5,
            convergence_tol: 1e-9,
            init: Init::PcaLike { scale: 0.3 },
            ..Default::default()
        };
        let (gm, trace) = minimize_gridmap(&rho, 1.0, &counts, &config).unwrap();
        let grid = gm.grid().clone();
        let energy = GridEnergy::new(&rho, 1.0, &grid).unwrap();
        let optimum = energy.energy(gm.values()).unwrap();
        let linear = |s: f64| {
            let lin = GridMap::from_map(grid.clone(), &SmoothMap::linear(vec![vec![s]], vec![-s / 2.0]).unwrap()).unwrap();
            energy.energy(lin.values()).unwrap()
        };
        let best_linear = (0..=4000).map(|k| linear(4.0 * k as f64 / 4000.0)).fold(f64::INFINITY, f64::min);
        assert!(optimum <= best_linear + 1e-12);
        let start = initial_gridmap(&rho, &counts, &config).unwrap();
        let r0 = max_norm(&el_residual(&start, &rho, 1.0).unwrap());
        let r1 = max_norm(&el_residual(&gm, &rho, 1.0).unwrap());
        assert!(r1 <= 1e-2 * r0, "{r1} vs {r0}; last {:?}", trace.last());
        let literal = max_norm(&crate::continuum::el_residual_with(&gm, &rho, 1.0, ElForm::Literal).unwrap());
        assert!(literal > r1);
    }
}
