//! Runs a small bandwidth-localization sweep and writes its CSV, SVG and
//! metadata into a temporary directory.

use tsne_lab::density::{Density, Domain};
use tsne_lab::experiments::{Experiment, SweepConfig};

fn main() -> tsne_lab::Result<()> {
    let density = Density::gaussian_mixture(Domain::unit(1), vec![vec![0.35], vec![0.7]], vec![0.15, 0.1], vec![0.5, 0.5])?;
    let config = SweepConfig::new(density, 1.0, vec![256, 1024, 4096], vec![0, 1, 2]);
    let result = Experiment::Bandwidth.run(&config)?;
    for (n, err) in result.medians("sup_error") {
        println!("n = {n:>5}: median sup error {err:.4}");
    }
    let dir = std::env::temp_dir().join("tsne-lab-sweep");
    let paths = result.write_outputs(&config, &dir)?;
    println!("wrote {}", paths.csv.display());
    println!("wrote {}", paths.svg.display());
    println!("wrote {}", paths.meta.display());
    Ok(())
}
