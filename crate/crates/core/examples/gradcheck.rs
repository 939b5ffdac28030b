//! Compares analytic gradients with central differences for every objective.

use tsne_lab::optimize::{gradcheck, GradTarget};

fn main() -> tsne_lab::Result<()> {
    for target in [GradTarget::DiscreteClassic, GradTarget::DiscreteRescaled, GradTarget::Gridmap] {
        let report = gradcheck(target, 0, 1e-5)?;
        println!(
            "{target:?}: max relative error {:.2e} ({})",
            report.max_rel_error,
            if report.passed { "ok" } else { "FAILED" }
        );
    }
    Ok(())
}
