//! Numerical toolkit for tSNE energies and their large-sample limits.
//!
//! * [`density`]: box domains, bounded densities and seeded sampling.
//! * [`bandwidth`]: perplexity, per-point bandwidth calibration, KDE and the
//!   limiting bandwidth `σ_κ`.
//! * [`energy`]: affinities, the KL objective, its attraction/repulsion
//!   decomposition, the rescaled objective and gradients.
//! * [`continuum`]: averaged energies, conditional moments, the continuum
//!   energy on grids and Euler–Lagrange residuals.
//! * [`optimize`]: momentum descent on discrete and grid energies.
//! * [`experiments`]: seeded sweeps over `n` with CSV, SVG and JSON outputs.

pub mod bandwidth;
pub mod continuum;
pub mod density;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod optimize;
pub mod plot;
pub mod quadrature;
pub mod smooth_map;

pub use error::{Error, Result};
