//! Minimizes the rescaled energy of a one-dimensional sample and reports the
//! optimization trace.

use tsne_lab::bandwidth::{calibrate_profile, scale_for};
use tsne_lab::density::{Density, Domain};
use tsne_lab::energy::Variant;
use tsne_lab::optimize::{embedding_spread, minimize_discrete, Init, OptimizerConfig};

fn main() -> tsne_lab::Result<()> {
    let density = Density::uniform(Domain::unit(1))?;
    let n = 512;
    let h = scale_for(n, 1, 1.0);
    let data = density.sample(n, 11)?;
    let profile = calibrate_profile(&data, 1.0, h, 1e-10)?;

    let config = OptimizerConfig {
        steps: 800,
        learning_rate: 0.4,
        momentum: 0.98,
        restart: true,
        dim: 1,
        init: Init::PcaLike { scale: 0.1 },
        ..OptimizerConfig::default()
    };
    let (emb, trace) = minimize_discrete(&data, &profile, Variant::Rescaled, &config)?;
    for r in trace.records.iter().step_by(10) {
        println!("step {:>4}  total {:>10.6}  spread {:.4}", r.step, r.total, r.rms_spread);
    }
    println!("converged: {}, final spread {:.4}", trace.converged, embedding_spread(&emb));
    Ok(())
}
