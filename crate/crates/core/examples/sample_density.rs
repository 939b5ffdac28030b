//! Draws a seeded sample from a two-component Gaussian mixture on the unit square.

use tsne_lab::density::{Density, Domain};

fn main() -> tsne_lab::Result<()> {
    let density = Density::gaussian_mixture(
        Domain::unit(2),
        vec![vec![0.3, 0.3], vec![0.7, 0.6]],
        vec![0.12, 0.08],
        vec![0.6, 0.4],
    )?;
    let (lo, hi) = density.bounds();
    println!("density bounds: [{lo:.4}, {hi:.4}], rho* = {:.4}", density.rho_star());

    let data = density.sample(1000, 7)?;
    let center = density.eval(&[0.5, 0.5])?;
    println!("drew {} points in d = {}; rho(0.5, 0.5) = {center:.4}", data.len(), data.dim());

    let mut stdout = std::io::stdout().lock();
    println!("first rows:");
    let head = tsne_lab::density::Dataset::from_rows(
        &(0..5).map(|i| data.point(i).to_vec()).collect::<Vec<_>>(),
    )?;
    head.write_csv(&mut stdout)?;
    Ok(())
}
