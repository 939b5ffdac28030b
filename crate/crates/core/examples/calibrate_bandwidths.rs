//! Calibrates per-point bandwidths on a uniform sample and compares them with
//! the limiting bandwidth of the density.

use tsne_lab::bandwidth::{calibrate_profile, limit_bandwidth, scale_for};
use tsne_lab::density::{Density, Domain};

fn main() -> tsne_lab::Result<()> {
    let density = Density::uniform(Domain::unit(2))?;
    let kappa = 1.0;
    let n = 2000;
    let h = scale_for(n, 2, 1.0);
    let data = density.sample(n, 1)?;
    let profile = calibrate_profile(&data, kappa, h, 1e-10)?;

    let center = [0.5, 0.5];
    let limit = limit_bandwidth(&density, kappa, &center)?;
    let i = (0..n)
        .min_by(|&a, &b| {
            let da: f64 = data.point(a).iter().zip(&center).map(|(x, c)| (x - c).powi(2)).sum();
            let db: f64 = data.point(b).iter().zip(&center).map(|(x, c)| (x - c).powi(2)).sum();
            da.total_cmp(&db)
        })
        .unwrap_or(0);
    println!("n = {n}, h = {h:.4}");
    println!("point nearest the center: sigma/h = {:.4}, limit = {limit:.4}", profile.sigma_hat(i));

    let mut hats: Vec<f64> = (0..n).map(|i| profile.sigma_hat(i)).collect();
    hats.sort_by(f64::total_cmp);
    println!(
        "sigma/h quartiles: {:.4} {:.4} {:.4}",
        hats[n / 4],
        hats[n / 2],
        hats[3 * n / 4]
    );
    Ok(())
}
