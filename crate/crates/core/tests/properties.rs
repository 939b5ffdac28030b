//! Property tests against brute-force oracles written independently of the
//! library internals.

use approx::assert_relative_eq;
use ndarray::Array2;
use proptest::prelude::*;

use tsne_lab::bandwidth::{calibrate_profile, perplexity, perplexity_closed_form, BandwidthProfile, ProfileMode};
use tsne_lab::density::{Dataset, Density, Domain};
use tsne_lab::energy::{affinities_p, attraction, decompose, Embedding, RepulsionConvention, Variant};
use tsne_lab::optimize::{minimize_objective, DiscreteObjective, OptimizerConfig};

fn points(n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, d), n)
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Symmetrized Gaussian affinities and Student-t KL, straight from the definitions.
fn naive_kl(x: &[Vec<f64>], sigmas: &[f64], y: &[Vec<f64>]) -> f64 {
    let n = x.len();
    let mut cond = vec![vec![0.0; n]; n];
    for i in 0..n {
        let w: Vec<f64> = (0..n)
            .map(|k| if k == i { 0.0 } else { (-sq(&x[i], &x[k]) / (2.0 * sigmas[i] * sigmas[i])).exp() })
            .collect();
        let z: f64 = w.iter().sum();
        for k in 0..n {
            cond[i][k] = w[k] / z;
        }
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += 1.0 / (1.0 + sq(&y[i], &y[j]));
            }
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let p = (cond[i][j] + cond[j][i]) / (2.0 * n as f64);
                let q = 1.0 / (1.0 + sq(&y[i], &y[j])) / s;
                if p > 0.0 {
                    kl += p * (p / q).ln();
                }
            }
        }
    }
    kl
}

fn dataset(rows: &[Vec<f64>]) -> Dataset {
    Dataset::from_rows(rows).unwrap()
}

fn embedding(rows: &[Vec<f64>]) -> Embedding {
    let n = rows.len();
    let d = rows[0].len();
    Embedding::new(Array2::from_shape_fn((n, d), |(i, k)| rows[i][k])).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decomposition_matches_brute_force_kl(
        x in points(9, 2),
        y in points(9, 2),
        sigmas in prop::collection::vec(0.3f64..2.0, 9),
    ) {
        let profile = BandwidthProfile::new(sigmas.clone(), 0.5, 1.0, ProfileMode::Calibrated).unwrap();
        let parts = decompose(&dataset(&x), &profile, &embedding(&y)).unwrap();
        let oracle = naive_kl(&x, &sigmas, &y);
        assert_relative_eq!(parts.total_kl, oracle, epsilon = 1e-10, max_relative = 1e-10);
        assert_relative_eq!(
            parts.attract + parts.repulse + parts.data_shifted,
            oracle,
            epsilon = 1e-10,
            max_relative = 1e-10
        );
    }

    #[test]
    fn sparse_attraction_equals_dense(
        x in points(12, 1),
        y in points(12, 2),
        sigma in 0.05f64..1.0,
    ) {
        let data = dataset(&x);
        let profile = BandwidthProfile::constant(12, sigma, 0.3, 1.0).unwrap();
        let emb = embedding(&y);
        let dense = decompose(&data, &profile, &emb).unwrap().attract;
        let sparse = attraction(&data, &profile, &emb).unwrap();
        assert_relative_eq!(dense, sparse, epsilon = 1e-12, max_relative = 1e-10);
    }

    #[test]
    fn energy_is_invariant_under_rigid_motions(
        x in points(8, 2),
        y in points(8, 2),
        angle in 0.0f64..std::f64::consts::TAU,
        shift in prop::collection::vec(-5.0f64..5.0, 2),
    ) {
        let data = dataset(&x);
        let profile = BandwidthProfile::constant(8, 0.7, 0.5, 1.0).unwrap();
        let (c, s) = (angle.cos(), angle.sin());
        let moved: Vec<Vec<f64>> = y
            .iter()
            .map(|p| vec![c * p[0] - s * p[1] + shift[0], s * p[0] + c * p[1] + shift[1]])
            .collect();
        let a = decompose(&data, &profile, &embedding(&y)).unwrap();
        let b = decompose(&data, &profile, &embedding(&moved)).unwrap();
        assert_relative_eq!(a.total_kl, b.total_kl, epsilon = 1e-10, max_relative = 1e-9);
        assert_relative_eq!(a.attract, b.attract, epsilon = 1e-10, max_relative = 1e-9);
        assert_relative_eq!(a.repulse, b.repulse, epsilon = 1e-10, max_relative = 1e-9);
    }

    #[test]
    fn perplexity_is_monotone_and_matches_closed_form(
        x in points(10, 2),
        i in 0usize..10,
        s1 in 0.05f64..3.0,
        ratio in 1.01f64..4.0,
    ) {
        let data = dataset(&x);
        let a = perplexity(&data, i, s1).unwrap();
        let b = perplexity(&data, i, s1 * ratio).unwrap();
        prop_assert!(b >= a * (1.0 - 1e-12), "PP({}) = {a} > PP({}) = {b}", s1, s1 * ratio);
        prop_assert!((1.0 - 1e-12..=9.0 + 1e-9).contains(&a));
        let closed = perplexity_closed_form(&data, i, s1).unwrap();
        assert_relative_eq!(a, closed, max_relative = 1e-9);
    }

    #[test]
    fn gradient_matches_central_differences(
        x in points(7, 2),
        y in points(7, 2),
        rescaled in any::<bool>(),
    ) {
        let variant = if rescaled { Variant::Rescaled } else { Variant::Classic };
        let profile = BandwidthProfile::constant(7, 0.8, 0.5, 1.0).unwrap();
        let obj = DiscreteObjective::new(&dataset(&x), &profile, variant, RepulsionConvention::Canonical).unwrap();
        let y0 = embedding(&y).into_inner();
        let g = obj.gradient(&y0).unwrap();
        let step = 1e-5;
        let scale = g.iter().fold(1e-3f64, |m, v| m.max(v.abs()));
        for (idx, &gv) in g.indexed_iter() {
            let mut yp = y0.clone();
            let mut ym = y0.clone();
            yp[idx] += step;
            ym[idx] -= step;
            let fd = (obj.energy(&yp).unwrap() - obj.energy(&ym).unwrap()) / (2.0 * step);
            prop_assert!((fd - gv).abs() <= 1e-6 * scale + 1e-9, "{idx:?}: fd {fd} vs {gv}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn calibration_hits_the_target_perplexity(seed in 0u64..1000, kappa in 0.5f64..4.0) {
        let density = Density::uniform(Domain::unit(2)).unwrap();
        let n = 200;
        let h = 0.3;
        let data = density.sample(n, seed).unwrap();
        let profile = calibrate_profile(&data, kappa, h, 1e-10).unwrap();
        let target = kappa * n as f64 * h * h;
        for i in (0..n).step_by(17) {
            let pp = perplexity(&data, i, profile.sigmas()[i]).unwrap();
            assert_relative_eq!(pp, target, max_relative = 1e-6);
        }
    }

    #[test]
    fn plain_gradient_descent_never_increases_the_energy(
        seed in 0u64..1000,
        y in points(40, 2),
        rescaled in any::<bool>(),
    ) {
        let variant = if rescaled { Variant::Rescaled } else { Variant::Classic };
        let density = Density::uniform(Domain::unit(2)).unwrap();
        let data = density.sample(40, seed).unwrap();
        let profile = calibrate_profile(&data, 1.0, 0.4, 1e-10).unwrap();
        let obj = DiscreteObjective::new(&data, &profile, variant, RepulsionConvention::Canonical).unwrap();
        let config = OptimizerConfig {
            steps: 200,
            learning_rate: 0.05,
            momentum: 0.0,
            record_every: 1,
            ..OptimizerConfig::default()
        };
        let (_, trace) = minimize_objective(&obj, embedding(&y).into_inner(), &config).unwrap();
        for w in trace.records.windows(2) {
            prop_assert!(w[1].total <= w[0].total + 1e-12, "energy rose at step {}", w[1].step);
        }
    }
}

#[test]
fn affinities_are_symmetric_and_sum_to_one() {
    let density = Density::uniform(Domain::unit(3)).unwrap();
    let data = density.sample(30, 4).unwrap();
    let profile = calibrate_profile(&data, 1.0, 0.5, 1e-10).unwrap();
    let p = affinities_p(&data, &profile).unwrap();
    let p = p.p();
    assert_relative_eq!(p.sum(), 1.0, epsilon = 1e-12);
    for i in 0..30 {
        assert_eq!(p[[i, i]], 0.0);
        for j in 0..30 {
            assert_eq!(p[[i, j]], p[[j, i]]);
        }
    }
}
