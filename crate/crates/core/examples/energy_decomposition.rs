//! Splits the KL energy of an embedding into attraction, repulsion and the
//! data-only shift, and checks that the parts add up.

use tsne_lab::bandwidth::{calibrate_profile, scale_for};
use tsne_lab::density::{Density, Domain};
use tsne_lab::energy::{affinities_p, decompose, kl_energy, Embedding};
use tsne_lab::smooth_map::SmoothMap;

fn main() -> tsne_lab::Result<()> {
    let density = Density::uniform(Domain::unit(2))?;
    let n = 500;
    let h = scale_for(n, 2, 1.0);
    let data = density.sample(n, 3)?;
    let profile = calibrate_profile(&data, 1.0, h, 1e-10)?;

    let map = SmoothMap::sinusoid(vec![1.0, 0.5], vec![vec![3.0, 0.0], vec![0.0, 2.0]], vec![0.0, 0.5])?;
    let emb = Embedding::from_map(&map, &data)?;

    let parts = decompose(&data, &profile, &emb)?;
    let kl = kl_energy(&affinities_p(&data, &profile)?, &emb)?;
    println!("attract      {:.6}", parts.attract);
    println!("repulse      {:.6}", parts.repulse);
    println!("data shift   {:.6}", parts.data_shifted);
    println!("sum          {:.6}", parts.attract + parts.repulse + parts.data_shifted);
    println!("direct KL    {kl:.6}");
    if let Some(r) = parts.rescaled_total {
        println!("rescaled     {r:.6}");
    }
    Ok(())
}
