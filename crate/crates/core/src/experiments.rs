//! Seeded sweeps over `n` that probe the large-sample behavior of the
//! bandwidths, the energies and their minimizers.
//!
//! Every experiment is a pure function of its [`SweepConfig`]. Cells
//! `(n, seed)` run in parallel and are collected in `(n, seed)` order, so the
//! CSV output is byte-identical across reruns and thread counts.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{analytic_profile, calibrate_profile, scale_for, sigma_kappa, ProfileMode};
use crate::continuum::{averaged_attraction, continuum_energy, el_residual, max_norm, GridMap};
use crate::density::{Density, DensityKind};
use crate::energy::{attraction, repulsion, Embedding, RepulsionConvention, Variant};
use crate::error::{Error, Result};
use crate::optimize::{
    embedding_diameter, embedding_spread, initial_gridmap, minimize_discrete, minimize_gridmap_from, Init,
    OptimizerConfig,
};
use crate::plot::{loglog_svg, Series};
use crate::quadrature::QuadratureGrid;
use crate::smooth_map::SmoothMap;

fn default_xi() -> f64 {
    1.0
}

fn default_calibration_tol() -> f64 {
    1e-8
}

fn default_control() -> bool {
    true
}

/// Configuration shared by all experiments. Optional fields fall back to
/// per-experiment defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub density: Density,
    pub kappa: f64,
    /// Bandwidth exponent: `h_n = n^{-1/(d+ξ)}`.
    #[serde(default = "default_xi")]
    pub xi: f64,
    pub n_values: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Test map for the consistency sweep, reference map for the ill-posedness sweep.
    #[serde(default)]
    pub map: Option<SmoothMap>,
    /// Optimizer for the discrete minimizers, or for the grid minimizer in the
    /// residual sweep.
    #[serde(default)]
    pub optimizer: Option<OptimizerConfig>,
    /// Points closer than this to the boundary are excluded from bandwidth
    /// errors. Defaults to a tenth of the domain diameter.
    #[serde(default)]
    pub interior_margin: Option<f64>,
    /// Profile used by the consistency sweep (analytic by default).
    #[serde(default)]
    pub profile_mode: Option<ProfileMode>,
    #[serde(default = "default_calibration_tol")]
    pub calibration_tol: f64,
    /// Quadrature or continuum grid node counts per axis.
    #[serde(default)]
    pub grid: Option<Vec<usize>>,
    /// Optimizer for the continuum minimizer in the rescaled sweep.
    #[serde(default)]
    pub continuum_optimizer: Option<OptimizerConfig>,
    /// Run the pinned-bandwidth control in the ill-posedness sweep.
    #[serde(default = "default_control")]
    pub control: bool,
}

impl SweepConfig {
    /// Minimal configuration with every optional field at its default.
    pub fn new(density: Density, kappa: f64, n_values: Vec<usize>, seeds: Vec<u64>) -> Self {
        Self {
            density,
            kappa,
            xi: default_xi(),
            n_values,
            seeds,
            map: None,
            optimizer: None,
            interior_margin: None,
            profile_mode: None,
            calibration_tol: default_calibration_tol(),
            grid: None,
            continuum_optimizer: None,
            control: default_control(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_values.is_empty() || self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_values must be nonempty and strictly increasing".into());
        }
        if self.n_values[0] == 0 {
            return bad("n_values must be positive".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty".into());
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be positive, got {}", self.kappa));
        }
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return bad(format!("xi must be positive, got {}", self.xi));
        }
        if let Some(m) = self.interior_margin {
            if !(m >= 0.0) {
                return bad("interior_margin must be nonnegative".into());
            }
        }
        if !(self.calibration_tol > 0.0) {
            return bad("calibration_tol must be positive".into());
        }
        if let Some(g) = &self.grid {
            if g.len() != self.density.dim() || g.contains(&0) {
                return bad(format!("grid needs {} positive counts", self.density.dim()));
            }
        }
        if let Some(o) = &self.optimizer {
            o.validate()?;
        }
        if let Some(o) = &self.continuum_optimizer {
            o.validate()?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.density.dim()
    }

    pub fn h(&self, n: usize) -> f64 {
        scale_for(n, self.dim(), self.xi)
    }

    pub fn margin(&self) -> f64 {
        self.interior_margin
            .unwrap_or_else(|| 0.1 * self.density.domain().diameter())
    }

    fn grid_or(&self, default: usize) -> Result<QuadratureGrid> {
        let counts = self.grid.clone().unwrap_or_else(|| vec![default; self.dim()]);
        QuadratureGrid::new(self.density.domain(), &counts)
    }
}

/// The five sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Bandwidth,
    Consistency,
    Illposed,
    Rescaled,
    El,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Bandwidth,
        Experiment::Consistency,
        Experiment::Illposed,
        Experiment::Rescaled,
        Experiment::El,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Bandwidth => "bandwidth",
            Experiment::Consistency => "consistency",
            Experiment::Illposed => "illposed",
            Experiment::Rescaled => "rescaled",
            Experiment::El => "el",
        }
    }

    pub fn run(self, config: &SweepConfig) -> Result<SweepResult> {
        match self {
            Experiment::Bandwidth => exp_bandwidth(config),
            Experiment::Consistency => exp_consistency(config),
            Experiment::Illposed => exp_illposed(config),
            Experiment::Rescaled => exp_rescaled(config),
            Experiment::El => exp_el_residual(config),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub n: usize,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

/// Median and quartiles of the finite values of one metric at one `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub metric: String,
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub experiment: Experiment,
    pub rows: Vec<Row>,
    pub aggregates: Vec<Aggregate>,
    /// Scalars computed once per sweep (for example the continuum minimizer).
    pub extras: BTreeMap<String, f64>,
    plot_metrics: Vec<String>,
    y_label: String,
}

/// Paths written by [`SweepResult::write_outputs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub meta: PathBuf,
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median of the finite entries.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

impl SweepResult {
    fn build(
        experiment: Experiment,
        rows: Vec<Row>,
        extras: BTreeMap<String, f64>,
        plot_metrics: &[&str],
        y_label: &str,
    ) -> Self {
        let mut metrics: Vec<String> = Vec::new();
        let mut ns: Vec<usize> = Vec::new();
        for r in &rows {
            if !metrics.contains(&r.metric) {
                metrics.push(r.metric.clone());
            }
            if !ns.contains(&r.n) {
                ns.push(r.n);
            }
        }
        let mut aggregates = Vec::new();
        for metric in &metrics {
            for &n in &ns {
                let mut v: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.n == n && &r.metric == metric && r.value.is_finite())
                    .map(|r| r.value)
                    .collect();
                v.sort_by(f64::total_cmp);
                aggregates.push(Aggregate {
                    metric: metric.clone(),
                    n,
                    median: quantile(&v, 0.5),
                    q1: quantile(&v, 0.25),
                    q3: quantile(&v, 0.75),
                    count: v.len(),
                });
            }
        }
        Self {
            experiment,
            rows,
            aggregates,
            extras,
            plot_metrics: plot_metrics.iter().map(|s| s.to_string()).collect(),
            y_label: y_label.to_string(),
        }
    }

    /// Metric names in order of first appearance.
    pub fn metrics(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.metric.as_str()) {
                out.push(&r.metric);
            }
        }
        out
    }

    /// `(n, median)` for one metric, in increasing `n`.
    pub fn medians(&self, metric: &str) -> Vec<(usize, f64)> {
        self.aggregates
            .iter()
            .filter(|a| a.metric == metric)
            .map(|a| (a.n, a.median))
            .collect()
    }

    pub fn median(&self, metric: &str, n: usize) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.metric == metric && a.n == n)
            .map(|a| a.median)
    }

    pub fn values(&self, metric: &str, n: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric && r.n == n)
            .map(|r| r.value)
            .collect()
    }

    /// CSV with header `n,seed,metric,value`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n", "seed", "metric", "value"])?;
        for r in &self.rows {
            w.write_record([r.n.to_string(), r.seed.to_string(), r.metric.clone(), r.value.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_svg(&self) -> String {
        let series: Vec<Series> = self
            .plot_metrics
            .iter()
            .map(|m| {
                let pts = self.medians(m).into_iter().map(|(n, v)| (n as f64, v)).collect();
                Series::new(m.clone(), pts)
            })
            .collect();
        let title = format!("{}: median over seeds", self.experiment);
        let x_label = if self.experiment == Experiment::El {
            "nodes per axis"
        } else {
            "n"
        };
        loglog_svg(&title, x_label, &self.y_label, &series)
    }

    /// Writes `<name>.csv`, `<name>.svg` and `<name>.meta.json` into `dir`.
    pub fn write_outputs(&self, config: &SweepConfig, dir: &Path) -> Result<OutputPaths> {
        fs::create_dir_all(dir)?;
        let name = self.experiment.name();
        let paths = OutputPaths {
            csv: dir.join(format!("{name}.csv")),
            svg: dir.join(format!("{name}.svg")),
            meta: dir.join(format!("{name}.meta.json")),
        };
        let mut csv_bytes = Vec::new();
        self.write_csv(&mut csv_bytes)?;
        fs::write(&paths.csv, csv_bytes)?;
        fs::write(&paths.svg, self.to_svg())?;
        let meta = serde_json::json!({
            "experiment": name,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "seeds": config.seeds,
            "extras": self.extras,
            "aggregates": self.aggregates,
        });
        fs::write(&paths.meta, serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(paths)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Sampling seed of cell `(n, seed)`: distinct sizes draw independent samples.
pub fn cell_seed(seed: u64, n: usize) -> u64 {
    splitmix64(seed ^ splitmix64(n as u64))
}

type CellMetrics = Vec<(String, f64)>;

/// Runs `cell` on every `(n, seed)` and flattens the metrics into rows.
fn sweep<F>(config: &SweepConfig, cell: F) -> Result<Vec<Row>>
where
    F: Fn(usize, u64) -> Result<CellMetrics> + Sync,
{
    let cells: Vec<(usize, u64)> = config
        .n_values
        .iter()
        .flat_map(|&n| config.seeds.iter().map(move |&s| (n, s)))
        .collect();
    let results = cells
        .par_iter()
        .map(|&(n, s)| cell(n, s))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (&(n, seed), metrics) in cells.iter().zip(results) {
        for (metric, value) in metrics {
            rows.push(Row {
                n,
                seed,
                metric,
                value,
            });
        }
    }
    Ok(rows)
}

fn tile_of(density: &Density, x: &[f64]) -> Option<usize> {
    let DensityKind::Tiles { shape, .. } = density.kind() else {
        return None;
    };
    let dom = density.domain();
    let mut idx = 0;
    for k in 0..x.len() {
        let frac = (x[k] - dom.lower()[k]) / (dom.upper()[k] - dom.lower()[k]);
        let c = ((frac * shape[k] as f64).floor() as usize).min(shape[k] - 1);
        idx = idx * shape[k] + c;
    }
    Some(idx)
}

/// Calibrated bandwidth error at interior sample points.
///
/// Metrics per cell: `sup_error` and `median_error` of `|σ̂_i/h - σ_κ(X_i)|`
/// over points at least the margin away from the boundary, the number of such
/// points, and for tiled densities the median `σ̂_i/h` on each tile.
pub fn exp_bandwidth(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let density = &config.density;
    let tiles = match density.kind() {
        DensityKind::Tiles { values, .. } => values.len(),
        _ => 0,
    };
    let rows = sweep(config, |n, seed| {
        let data = density.sample(n, cell_seed(seed, n))?;
        let h = config.h(n);
        let profile = calibrate_profile(&data, config.kappa, h, config.calibration_tol)?;
        let margin = config.margin();
        let mut errors = Vec::new();
        let mut per_tile = vec![Vec::new(); tiles];
        for i in 0..n {
            let x = data.point(i);
            if density.domain().distance_to_boundary(x) < margin {
                continue;
            }
            let sigma_hat = profile.sigmas()[i] / h;
            errors.push((sigma_hat - sigma_kappa(density.value(x), config.kappa, data.dim())).abs());
            if let Some(t) = tile_of(density, x) {
                per_tile[t].push(sigma_hat);
            }
        }
        let sup = errors.iter().copied().fold(f64::NAN, f64::max);
        let mut out = vec![
            ("sup_error".to_string(), sup),
            ("median_error".to_string(), median(&errors)),
            ("interior_points".to_string(), errors.len() as f64),
        ];
        for (t, v) in per_tile.iter().enumerate() {
            out.push((format!("sigma_median_tile{t}"), median(v)));
        }
        Ok(out)
    })?;
    Ok(SweepResult::build(
        Experiment::Bandwidth,
        rows,
        BTreeMap::new(),
        &["sup_error", "median_error"],
        "|σ̂ - σ_κ|",
    ))
}

/// Discrete attraction and repulsion of a fixed map against their limits.
///
/// `attract_error = |A_n/h² - ∫ σ_κ² |∇T|² ρ|` and `repulse_error = |R_n - R̃|`,
/// with absolute and relative variants.
pub fn exp_consistency(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let map = config
        .map
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("consistency sweep needs a map".into()))?;
    let density = &config.density;
    let grid = config.grid_or(QuadratureGrid::default_for(density.domain())?.counts()[0])?;
    let limit = continuum_energy(density, map, config.kappa, &grid)?;
    let (target, repulse_limit) = (limit.attract, limit.repulse);
    let mode = config.profile_mode.unwrap_or(ProfileMode::Analytic);
    let rows = sweep(config, |n, seed| {
        let data = density.sample(n, cell_seed(seed, n))?;
        let h = config.h(n);
        let profile = match mode {
            ProfileMode::Analytic => analytic_profile(&data, density, config.kappa, h)?,
            ProfileMode::Calibrated => calibrate_profile(&data, config.kappa, h, config.calibration_tol)?,
        };
        let emb = Embedding::from_map(map, &data)?;
        let scaled = attraction(&data, &profile, &emb)? / (h * h);
        let repulse = repulsion(&emb, RepulsionConvention::Canonical)?;
        let rel = |err: f64, reference: f64| {
            if reference != 0.0 {
                err / reference.abs()
            } else {
                err
            }
        };
        let attract_error = (scaled - target).abs();
        let repulse_error = (repulse - repulse_limit).abs();
        Ok(vec![
            ("dirichlet_target".into(), target),
            ("attract_scaled".into(), scaled),
            ("attract_error".into(), attract_error),
            ("attract_rel_error".into(), rel(attract_error, target)),
            ("repulse".into(), repulse),
            ("repulse_continuum".into(), repulse_limit),
            ("repulse_error".into(), repulse_error),
            ("repulse_rel_error".into(), rel(repulse_error, repulse_limit)),
        ])
    })?;
    Ok(SweepResult::build(
        Experiment::Consistency,
        rows,
        BTreeMap::from([
            ("dirichlet_target".into(), target),
            ("repulse_continuum".into(), repulse_limit),
        ]),
        &["attract_error", "repulse_error"],
        "absolute error",
    ))
}

/// `(sin(π x_0), …, sin(π x_{m-1}))` with input coordinates reused cyclically.
fn reference_sinusoid(d: usize, m: usize) -> Result<SmoothMap> {
    let frequency = (0..m)
        .map(|l| {
            let mut f = vec![0.0; d];
            f[l % d] = std::f64::consts::PI;
            f
        })
        .collect();
    SmoothMap::sinusoid(vec![1.0; m], frequency, vec![0.0; m])
}

fn default_discrete_optimizer(d: usize, variant: Variant) -> OptimizerConfig {
    match variant {
        Variant::Classic => OptimizerConfig {
            steps: 300,
            learning_rate: 1.0,
            momentum: 0.5,
            init: Init::PcaLike { scale: 0.1 },
            dim: d,
            ..Default::default()
        },
        Variant::Rescaled => OptimizerConfig {
            steps: 800,
            learning_rate: 0.4,
            momentum: 0.98,
            restart: true,
            init: Init::PcaLike { scale: 0.1 },
            dim: d,
            ..Default::default()
        },
    }
}

fn default_grid_optimizer(d: usize) -> OptimizerConfig {
    OptimizerConfig {
        steps: 20_000,
        learning_rate: 0.5,
        momentum: 0.95,
        restart: true,
        convergence_tol: 1e-9,
        init: Init::PcaLike { scale: 0.1 },
        dim: d,
        ..Default::default()
    }
}

/// Gives Gaussian initializations a per-cell seed.
fn seeded(config: &OptimizerConfig, seed: u64) -> OptimizerConfig {
    let mut c = config.clone();
    if let Init::Gaussian { seed: s, .. } = &mut c.init {
        *s ^= seed;
    }
    c
}

/// Final spread and diameter of one discrete minimization, `NaN` on divergence.
fn discrete_outcome(
    config: &SweepConfig,
    optimizer: &OptimizerConfig,
    variant: Variant,
    n: usize,
    seed: u64,
    h: f64,
) -> Result<(f64, f64, f64, f64)> {
    let data = config.density.sample(n, cell_seed(seed, n))?;
    let profile = calibrate_profile(&data, config.kappa, h, config.calibration_tol)?;
    match minimize_discrete(&data, &profile, variant, &seeded(optimizer, cell_seed(seed, n))) {
        Ok((emb, trace)) => {
            let total = trace.last().map_or(f64::NAN, |r| r.total);
            Ok((embedding_spread(&emb), embedding_diameter(&emb), total, 0.0))
        }
        Err(Error::Diverging { .. } | Error::NonFinite { .. }) => Ok((f64::NAN, f64::NAN, f64::NAN, 1.0)),
        Err(e) => Err(e),
    }
}

/// Classic minimizers with calibrated bandwidths at `h_n`.
///
/// Metrics: final `rms_spread`, `diameter`, `energy`, a `diverged` flag, the
/// averaged attraction `Ã_{h_n}` of a fixed reference map, and with
/// `control` the same minimization with `h` pinned at the smallest `n`.
pub fn exp_illposed(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let d = config.dim();
    let optimizer = config
        .optimizer
        .clone()
        .unwrap_or_else(|| default_discrete_optimizer(d, Variant::Classic));
    let reference = match &config.map {
        Some(m) => m.clone(),
        None => reference_sinusoid(d, optimizer.dim)?,
    };
    let grid = config.grid_or(if d == 1 { 512 } else { 128 })?;
    let witness: Vec<f64> = config
        .n_values
        .par_iter()
        .map(|&n| averaged_attraction(&config.density, &reference, config.kappa, config.h(n), &grid).map(|e| e.value))
        .collect::<Result<_>>()?;
    let pinned = config.h(config.n_values[0]);
    let rows = sweep(config, |n, seed| {
        let (spread, diam, energy, diverged) = discrete_outcome(config, &optimizer, Variant::Classic, n, seed, config.h(n))?;
        let k = config.n_values.iter().position(|&v| v == n).expect("n in sweep");
        let mut out = vec![
            ("rms_spread".to_string(), spread),
            ("diameter".to_string(), diam),
            ("energy".to_string(), energy),
            ("diverged".to_string(), diverged),
            ("attract_reference".to_string(), witness[k]),
        ];
        if config.control {
            let (spread, diam, _, diverged) = discrete_outcome(config, &optimizer, Variant::Classic, n, seed, pinned)?;
            out.push(("control_rms_spread".into(), spread));
            out.push(("control_diameter".into(), diam));
            out.push(("control_diverged".into(), diverged));
        }
        Ok(out)
    })?;
    let plot: &[&str] = if config.control {
        &["rms_spread", "control_rms_spread", "attract_reference"]
    } else {
        &["rms_spread", "attract_reference"]
    };
    Ok(SweepResult::build(
        Experiment::Illposed,
        rows,
        BTreeMap::from([("pinned_h".into(), pinned)]),
        plot,
        "median value",
    ))
}

/// Rescaled minimizers with calibrated bandwidths, compared with the
/// continuum minimizer on a grid.
///
/// Metrics: final `rms_spread`, `diameter`, `rescaled_energy` and a
/// `diverged` flag. Extras hold the continuum minimizer's ρ-weighted spread
/// and energy and the ratio of that spread to the median discrete spread at
/// the largest `n`.
pub fn exp_rescaled(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let d = config.dim();
    let optimizer = config
        .optimizer
        .clone()
        .unwrap_or_else(|| default_discrete_optimizer(d, Variant::Rescaled));
    let rows = sweep(config, |n, seed| {
        let (spread, diam, energy, diverged) = discrete_outcome(config, &optimizer, Variant::Rescaled, n, seed, config.h(n))?;
        Ok(vec![
            ("rms_spread".to_string(), spread),
            ("diameter".to_string(), diam),
            ("rescaled_energy".to_string(), energy),
            ("diverged".to_string(), diverged),
        ])
    })?;
    let mut continuum = config
        .continuum_optimizer
        .clone()
        .unwrap_or_else(|| default_grid_optimizer(d));
    continuum.dim = optimizer.dim;
    let counts = config
        .grid
        .clone()
        .unwrap_or_else(|| vec![if d == 1 { 128 } else { 32 }; d]);
    let start = initial_gridmap(&config.density, &counts, &continuum)?;
    let (gm, trace) = minimize_gridmap_from(&config.density, config.kappa, start, &continuum)?;
    let cont_spread = gm.rms_spread(&config.density);
    let mut extras = BTreeMap::from([
        ("continuum_rms_spread".to_string(), cont_spread),
        ("continuum_energy".to_string(), trace.last().map_or(f64::NAN, |r| r.total)),
        ("continuum_steps".to_string(), trace.last().map_or(0.0, |r| r.step as f64)),
    ]);
    let result = SweepResult::build(Experiment::Rescaled, rows, BTreeMap::new(), &["rms_spread", "diameter"], "median value");
    let largest = *config.n_values.last().expect("validated");
    let discrete = result.median("rms_spread", largest).unwrap_or(f64::NAN);
    extras.insert("largest_n_rms_spread".into(), discrete);
    extras.insert("continuum_to_discrete_spread".into(), cont_spread / discrete);
    Ok(SweepResult { extras, ..result })
}

/// Grid minimizers of the continuum energy and their Euler–Lagrange
/// residuals. Here `n_values` are grid nodes per axis.
///
/// Metrics: `residual_init`, `residual_opt`, their ratio, the Neumann
/// `boundary_flux`, the final energy and spread, and the step count.
pub fn exp_el_residual(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let d = config.dim();
    if !(1..=2).contains(&d) {
        return Err(Error::InvalidConfig(format!("residual sweep supports d = 1 or 2, got {d}")));
    }
    if config.n_values[0] < 3 {
        return Err(Error::InvalidConfig("grids need at least 3 nodes per axis".into()));
    }
    let optimizer = config.optimizer.clone().unwrap_or_else(|| default_grid_optimizer(d));
    let rows = sweep(config, |nodes, seed| {
        let opt = seeded(&optimizer, cell_seed(seed, nodes));
        let start = initial_gridmap(&config.density, &vec![nodes; d], &opt)?;
        let r0 = max_norm(&el_residual(&start, &config.density, config.kappa)?);
        let (gm, trace): (GridMap, _) = minimize_gridmap_from(&config.density, config.kappa, start, &opt)?;
        let r1 = max_norm(&el_residual(&gm, &config.density, config.kappa)?);
        let last = trace.last().expect("trace has records");
        Ok(vec![
            ("residual_init".to_string(), r0),
            ("residual_opt".to_string(), r1),
            ("residual_ratio".to_string(), r1 / r0),
            ("boundary_flux".to_string(), gm.boundary_flux()),
            ("energy".to_string(), last.total),
            ("rms_spread".to_string(), gm.rms_spread(&config.density)),
            ("steps".to_string(), last.step as f64),
        ])
    })?;
    Ok(SweepResult::build(
        Experiment::El,
        rows,
        BTreeMap::new(),
        &["residual_init", "residual_opt"],
        "max-norm residual",
    ))
}
