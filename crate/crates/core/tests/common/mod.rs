#![allow(dead_code)]

use barron_iss::{Activation, Atom, AtomSet, Dataset, Problem, WeightVariant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_atoms(rng: &mut ChaCha8Rng, d: usize, n: usize) -> AtomSet {
    let atoms: Vec<Atom> = (0..n)
        .map(|_| {
            Atom::new(
                (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    AtomSet::with_bounding_box(atoms, WeightVariant::WithConstant).unwrap()
}

pub fn random_points(rng: &mut ChaCha8Rng, d: usize, m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn activation_for(seed: u64) -> Activation {
    match seed % 3 {
        0 => Activation::relu(),
        1 => Activation::tanh(),
        _ => Activation::sigmoid(),
    }
}

/// Random atoms, random sample points and targets from a sparse random network plus a smooth term.
pub fn random_problem(seed: u64, d: usize, n: usize, m: usize) -> Problem {
    let mut r = rng(seed);
    let atoms = random_atoms(&mut r, d, n);
    let points = random_points(&mut r, d, m);
    let targets: Vec<f64> = points
        .iter()
        .map(|x| {
            x.iter()
                .enumerate()
                .map(|(k, v)| ((k + 1) as f64 * v).sin())
                .sum::<f64>()
                + 0.3
        })
        .collect();
    let ds = Dataset::new(points, targets, None).unwrap();
    Problem::new(ds, atoms, activation_for(seed)).unwrap()
}

/// Targets reproduced exactly by `k` atoms of the set.
pub fn exact_fit_problem(seed: u64, d: usize, n: usize, m: usize, k: usize) -> (Problem, Vec<f64>) {
    let mut r = rng(seed);
    let atoms = random_atoms(&mut r, d, n);
    let points = random_points(&mut r, d, m);
    let mut c = vec![0.0; n];
    for _ in 0..k {
        let j = r.random_range(0..n);
        c[j] = r.random_range(0.5..2.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
    }
    let ds = Dataset::new(points, vec![0.0; m], None).unwrap();
    let prob = Problem::new(ds.clone(), atoms.clone(), activation_for(seed)).unwrap();
    let f = prob.predict(&c);
    let prob = Problem::new(ds.with_targets(f).unwrap(), atoms, activation_for(seed)).unwrap();
    (prob, c)
}
