mod common;

use barron_iss::lab::{
    add_measurement_noise, bregman_distance, pairwise_double_integral, radon_nikodym_reweight,
    wasserstein_shift,
};
use barron_iss::oracle::{wasserstein1, GroundMetric};
use barron_iss::tessellation::{build_level, project_measure, Construction};
use barron_iss::*;
use proptest::prelude::*;

fn small_problem(seed: u64) -> Problem {
    let d = 1 + (seed % 2) as usize;
    common::random_problem(seed, d, 6 + (seed % 9) as usize, 10 + (seed % 13) as usize)
}

fn norm(ds: &Dataset, u: &[f64], v: &[f64]) -> f64 {
    let diff: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
    ds.norm(&diff)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_breakpoints_are_ordered_finite_and_feasible(seed in 0u64..10_000) {
        let problem = small_problem(seed);
        let traj = solve_exact_iss(&problem, f64::INFINITY, 10_000, 1e-13).unwrap();
        for w in traj.breakpoints.windows(2) {
            prop_assert!(w[1].t > w[0].t);
            prop_assert!(w[1].loss <= w[0].loss + 1e-12);
        }
        for b in &traj.breakpoints {
            prop_assert!(b.t.is_finite());
            prop_assert!(dual_feasibility(&b.p, problem.atoms(), 1e-9).unwrap().feasible);
            prop_assert!(subgradient_consistency(&b.mu, &b.p, problem.atoms(), 1e-9).unwrap());
        }
    }

    #[test]
    fn bregman_distance_is_nonnegative(seed in 0u64..10_000, i in 0usize..64, j in 0usize..64) {
        let problem = small_problem(seed);
        let traj = solve_exact_iss(&problem, f64::INFINITY, 10_000, 1e-13).unwrap();
        let a = &traj.breakpoints[i % traj.len()];
        let b = &traj.breakpoints[j % traj.len()];
        let d = bregman_distance(&a.mu, &b.mu, &b.p.values, problem.atoms()).unwrap();
        prop_assert!(d >= -1e-10, "{d}");
        let same = bregman_distance(&b.mu, &b.mu, &b.p.values, problem.atoms()).unwrap();
        prop_assert!(same.abs() <= 1e-12);
    }

    #[test]
    fn j_norm_is_absolutely_homogeneous(seed in 0u64..10_000, s in -5.0f64..5.0) {
        let problem = small_problem(seed);
        let mut r = common::rng(seed);
        let c: Vec<f64> = (0..problem.n_atoms()).map(|_| rand::Rng::random_range(&mut r, -2.0..2.0)).collect();
        let mu = SparseMeasure::new(c).unwrap();
        let j = j_norm(&mu, problem.atoms()).unwrap();
        let js = j_norm(&mu.scaled(s), problem.atoms()).unwrap();
        prop_assert!((js - s.abs() * j).abs() <= 1e-12 * (1.0 + j));
    }

    #[test]
    fn prediction_is_linear(seed in 0u64..10_000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let problem = small_problem(seed);
        let mut r = common::rng(seed + 1);
        let n = problem.n_atoms();
        let u: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut r, -1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut r, -1.0..1.0)).collect();
        let w: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let (pu, pv, pw) = (problem.predict(&u), problem.predict(&v), problem.predict(&w));
        for i in 0..pw.len() {
            prop_assert!((pw[i] - a * pu[i] - b * pv[i]).abs() <= 1e-12 * (1.0 + pw[i].abs()));
        }
    }

    #[test]
    fn noise_has_the_requested_norm(seed in 0u64..10_000, delta in 1e-6f64..1.0) {
        let ds = small_problem(seed).dataset().clone();
        let noisy = add_measurement_noise(&ds, delta, seed).unwrap();
        prop_assert!((norm(&ds, noisy.targets(), ds.targets()) - delta).abs() <= 1e-12);
        let again = add_measurement_noise(&ds, delta, seed).unwrap();
        prop_assert_eq!(noisy, again);
    }

    #[test]
    fn reweighting_stays_in_the_density_band(seed in 0u64..10_000, eps in 0.0f64..0.9) {
        let ds = small_problem(seed).dataset().clone();
        let biased = radon_nikodym_reweight(&ds, eps, seed).unwrap();
        prop_assert!((biased.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for (w, w2) in ds.weights().iter().zip(biased.weights()) {
            prop_assert!((w2 / w - 1.0).abs() <= eps + 1e-12);
        }
    }

    #[test]
    fn shifted_points_stay_within_transport_radius(seed in 0u64..10_000, eps in 0.0f64..0.5, linf in any::<bool>()) {
        let metric = if linf { GroundMetric::Linf } else { GroundMetric::L2 };
        let ds = small_problem(seed).dataset().clone();
        let shifted = wasserstein_shift(&ds, eps, seed, metric, None).unwrap();
        for i in 0..ds.len() {
            prop_assert!(metric.distance(ds.point(i), shifted.point(i)) <= eps + 1e-12);
        }
        prop_assert!(wasserstein1(&ds, &shifted, metric).unwrap() <= eps + 1e-9);
    }

    #[test]
    fn double_integral_matches_grid_quadrature(
        lens in prop::collection::vec(1usize..6, 1..5),
        vals in prop::collection::vec(0.0f64..2.0, 16),
        t_steps in 1usize..40,
    ) {
        // breakpoints on a grid of width h make cell-centred quadrature exact
        let h = 0.125;
        let k = lens.len();
        let mut times = vec![0.0];
        for l in &lens[..k - 1] {
            let last = *times.last().unwrap();
            times.push(last + *l as f64 * h);
        }
        let mut pair = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..i {
                pair[i][j] = vals[(i * 4 + j) % 16];
                pair[j][i] = pair[i][j];
            }
        }
        let t = t_steps as f64 * h;
        let seg = |x: f64| times.iter().rposition(|&s| s <= x).unwrap();
        let mut quad = 0.0;
        for a in 0..t_steps {
            let tau = (a as f64 + 0.5) * h;
            for b in 0..a {
                let s = (b as f64 + 0.5) * h;
                quad += h * h * pair[seg(tau)][seg(s)];
            }
        }
        let exact = pairwise_double_integral(&times, &pair, t);
        prop_assert!((exact - quad).abs() <= 1e-12 * (1.0 + quad.abs()), "{exact} vs {quad}");
    }

    #[test]
    fn projection_preserves_signed_mass(seed in 0u64..10_000, level in 1usize..3) {
        let dom = DomainBox::symmetric(2, 1.0).unwrap();
        let fine = build_level(&dom, Construction::RegularGrid, level + 2, WeightVariant::WithConstant).unwrap();
        let coarse = build_level(&dom, Construction::RegularGrid, level, WeightVariant::WithConstant).unwrap();
        let mut r = common::rng(seed);
        let c: Vec<f64> = (0..fine.len())
            .map(|_| if rand::Rng::random_bool(&mut r, 0.2) { rand::Rng::random_range(&mut r, -1.0..1.0) } else { 0.0 })
            .collect();
        let mu = SparseMeasure::new(c).unwrap();
        let proj = project_measure(&mu, &fine.atoms, &coarse).unwrap();
        let total: f64 = mu.coefficients.iter().sum();
        let total_proj: f64 = proj.coefficients.iter().sum();
        prop_assert!((total - total_proj).abs() <= 1e-12);
        prop_assert!(total_variation(&proj) <= total_variation(&mu) + 1e-12);
    }
}
