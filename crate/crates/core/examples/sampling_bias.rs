//! Bias bounds for reweighted, subsampled and shifted sampling distributions.

use barron_iss::lab::{
    bias_bound_report, monte_carlo_subsample, radon_nikodym_reweight, wasserstein_shift,
    BiasVariant,
};
use barron_iss::oracle::{minimal_norm_minimizer, wasserstein1, GroundMetric};
use barron_iss::*;
use rand::{Rng, SeedableRng};

fn main() -> Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let f = |x: &[f64]| (2.0 * x[0]).sin() + 0.5 * x[1];
    let points: Vec<Vec<f64>> = (0..60)
        .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let targets = points.iter().map(|x| f(x)).collect();
    let data = Dataset::new(points, targets, None)?;
    let atoms: Vec<Atom> = (0..10)
        .map(|_| {
            Atom::new(
                vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    let clean = Problem::new(
        data.clone(),
        AtomSet::with_bounding_box(atoms, WeightVariant::WithConstant)?,
        Activation::relu(),
    )?;
    let ref_clean = minimal_norm_minimizer(&clean)?;

    let cases: Vec<(Dataset, BiasVariant)> = vec![
        (
            radon_nikodym_reweight(&data, 0.2, 1)?,
            BiasVariant::RadonNikodym { epsilon: 0.2 },
        ),
        (
            monte_carlo_subsample(&data, 32, 1)?,
            BiasVariant::Sampling {
                m_sub: 32,
                delta_prob: 0.1,
            },
        ),
        (
            wasserstein_shift(&data, 0.05, 1, GroundMetric::L2, Some(&f))?,
            BiasVariant::Wasserstein {
                epsilon: 0.05,
                metric: GroundMetric::L2,
            },
        ),
        (radon_nikodym_reweight(&data, 0.2, 2)?, BiasVariant::General),
    ];
    for (biased, variant) in cases {
        let run = clean.with_dataset(biased.clone())?;
        let ref_run = minimal_norm_minimizer(&run)?;
        let traj = solve_exact_iss(&run, f64::INFINITY, 100_000, 1e-13)?;
        let rep = bias_bound_report(&traj, &clean, &run, &ref_clean, &ref_run, variant)?;
        let w1 = wasserstein1(&data, &biased, GroundMetric::L2)?;
        println!(
            "{:<17} applicable {:<5} estimate {:<5} min slack {:>10.3e}  (W1 to clean data {w1:.4})",
            rep.theorem_id,
            rep.applicable,
            rep.estimate,
            rep.min_slack()
        );
    }
    Ok(())
}
