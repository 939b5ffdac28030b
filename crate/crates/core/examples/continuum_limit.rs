//! Continuum energy of a smooth map under grid refinement, then a grid-map
//! minimization that drives the Euler-Lagrange residual down.

use tsne_lab::continuum::{continuum_energy, el_residual, max_norm};
use tsne_lab::density::{Density, Domain};
use tsne_lab::optimize::{initial_gridmap, minimize_gridmap_from, Init, OptimizerConfig};
use tsne_lab::quadrature::QuadratureGrid;
use tsne_lab::smooth_map::SmoothMap;

fn main() -> tsne_lab::Result<()> {
    let density = Density::tiles(Domain::unit(2), vec![2, 1], vec![0.5, 1.5])?;
    let kappa = 1.0;
    let map = SmoothMap::sinusoid(vec![1.0], vec![vec![2.0, 1.0]], vec![0.2])?;
    for per_axis in [16, 32, 64, 128] {
        let grid = QuadratureGrid::uniform(density.domain(), per_axis)?;
        let e = continuum_energy(&density, &map, kappa, &grid)?;
        println!(
            "{per_axis:>3}^2 nodes: attract {:.6}, repulse {:.6}, total {:.6}",
            e.attract, e.repulse, e.total
        );
    }

    let config = OptimizerConfig {
        steps: 20000,
        learning_rate: 0.5,
        momentum: 0.95,
        restart: true,
        convergence_tol: 1e-9,
        dim: 1,
        init: Init::PcaLike { scale: 0.1 },
        ..OptimizerConfig::default()
    };
    let start = initial_gridmap(&density, &[32, 32], &config)?;
    let before = max_norm(&el_residual(&start, &density, kappa)?);
    let (gm, trace) = minimize_gridmap_from(&density, kappa, start, &config)?;
    let after = max_norm(&el_residual(&gm, &density, kappa)?);
    let last = trace.last().map_or(0, |r| r.step);
    println!("grid minimizer after {last} steps: residual {before:.3e} -> {after:.3e}");
    println!("spread {:.4}, boundary flux {:.1e}", gm.rms_spread(&density), gm.boundary_flux());
    Ok(())
}
