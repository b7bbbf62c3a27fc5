use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::Dataset;
use crate::oracle::GroundMetric;

/// Data perturbation to apply before running the flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationKind {
    /// Additive target noise with `||f^delta - f||_{L^2(rho)} = delta`.
    Noise { delta: f64 },
    /// Reweighting with density ratio in `[1 - epsilon, 1 + epsilon]`.
    RadonNikodym { epsilon: f64 },
    /// Monte Carlo subsample of `m_sub` points.
    Subsample { m_sub: usize },
    /// Displacement of every point by at most `epsilon`.
    WassersteinShift {
        epsilon: f64,
        #[serde(default)]
        metric: GroundMetric,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    #[serde(flatten)]
    pub kind: PerturbationKind,
    #[serde(default)]
    pub seed: u64,
}

impl PerturbationSpec {
    /// Checks parameter ranges against a dataset of `m` samples.
    pub fn validate(&self, m: usize) -> Result<()> {
        match self.kind {
            PerturbationKind::Noise { delta } if !(delta > 0.0 && delta.is_finite()) => Err(
                Error::InvalidInput(format!("perturbation.delta must be positive, got {delta}")),
            ),
            PerturbationKind::RadonNikodym { epsilon } if !(epsilon > 0.0 && epsilon < 1.0) => {
                Err(Error::InvalidInput(format!(
                    "perturbation.epsilon must lie in (0, 1), got {epsilon}"
                )))
            }
            PerturbationKind::WassersteinShift { epsilon, .. }
                if !(epsilon > 0.0 && epsilon.is_finite()) =>
            {
                Err(Error::InvalidInput(format!(
                    "perturbation.epsilon must be positive, got {epsilon}"
                )))
            }
            PerturbationKind::Subsample { m_sub } if m_sub == 0 || m_sub > m => {
                Err(Error::InvalidInput(format!(
                    "perturbation.m_sub must lie in [1, {m}], got {m_sub}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Applies the perturbation. Shifted points keep their targets.
    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset> {
        self.validate(dataset.len())?;
        match self.kind {
            PerturbationKind::Noise { delta } => add_measurement_noise(dataset, delta, self.seed),
            PerturbationKind::RadonNikodym { epsilon } => {
                radon_nikodym_reweight(dataset, epsilon, self.seed)
            }
            PerturbationKind::Subsample { m_sub } => {
                monte_carlo_subsample(dataset, m_sub, self.seed)
            }
            PerturbationKind::WassersteinShift { epsilon, metric } => {
                wasserstein_shift(dataset, epsilon, self.seed, metric, None)
            }
        }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Adds Gaussian noise rescaled so that `||f^delta - f||_{L^2(rho)} = delta`.
pub fn add_measurement_noise(dataset: &Dataset, delta: f64, seed: u64) -> Result<Dataset> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise level must be nonnegative, got {delta}"
        )));
    }
    let mut r = rng(seed);
    let eta: Vec<f64> = (0..dataset.len())
        .map(|_| r.sample(StandardNormal))
        .collect();
    let norm = dataset.norm(&eta);
    if !(norm > 0.0) {
        return Err(Error::InvalidInput(
            "noise direction vanishes on the support of rho".into(),
        ));
    }
    let targets = dataset
        .targets()
        .iter()
        .zip(&eta)
        .map(|(f, e)| f + delta * e / norm)
        .collect();
    dataset.with_targets(targets)
}

/// Multiplies the weights by `1 + eta_i` with `sum w_i eta_i = 0` and
/// `max |eta_i| = epsilon` (or all zero when the draw is constant).
pub fn radon_nikodym_reweight(dataset: &Dataset, epsilon: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::InvalidInput(format!(
            "epsilon must lie in [0, 1), got {epsilon}"
        )));
    }
    let w = dataset.weights();
    let mut r = rng(seed);
    let u: Vec<f64> = (0..w.len()).map(|_| r.random_range(-1.0..=1.0)).collect();
    let mean: f64 = w.iter().zip(&u).map(|(w, u)| w * u).sum();
    let centered: Vec<f64> = u.iter().map(|u| u - mean).collect();
    let peak = centered.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let scale = if peak > 0.0 { epsilon / peak } else { 0.0 };
    let mut weights: Vec<f64> = w
        .iter()
        .zip(&centered)
        .map(|(w, c)| w * (1.0 + scale * c))
        .collect();
    // absorb the rounding error of the centring in the heaviest sample
    let total: f64 = weights.iter().sum();
    if let Some(k) = (0..w.len()).max_by(|&a, &b| w[a].total_cmp(&w[b])) {
        weights[k] += 1.0 - total;
    }
    dataset.with_weights(weights)
}

/// Indices of `m_sub` draws with replacement from the weights of `dataset`.
pub fn monte_carlo_subsample_indices(
    dataset: &Dataset,
    m_sub: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if m_sub == 0 {
        return Err(Error::InvalidInput("m_sub must be at least 1".into()));
    }
    let dist = WeightedIndex::new(dataset.weights())
        .map_err(|e| Error::InvalidInput(format!("cannot sample from weights: {e}")))?;
    let mut r = rng(seed);
    Ok((0..m_sub).map(|_| dist.sample(&mut r)).collect())
}

/// Empirical measure of `m_sub` i.i.d. draws from `rho`, each with weight `1/m_sub`.
pub fn monte_carlo_subsample(dataset: &Dataset, m_sub: usize, seed: u64) -> Result<Dataset> {
    let idx = monte_carlo_subsample_indices(dataset, m_sub, seed)?;
    let points = idx.iter().map(|&i| dataset.point(i).to_vec()).collect();
    let targets = idx.iter().map(|&i| dataset.targets()[i]).collect();
    Dataset::new(points, targets, None)
}

/// Moves every point by a random vector of length at most `epsilon` in
/// `metric`, so the identity coupling certifies `W_1 <= epsilon`. Targets are
/// re-evaluated with `target` when given and kept otherwise.
pub fn wasserstein_shift(
    dataset: &Dataset,
    epsilon: f64,
    seed: u64,
    metric: GroundMetric,
    target: Option<&dyn Fn(&[f64]) -> f64>,
) -> Result<Dataset> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be nonnegative, got {epsilon}"
        )));
    }
    let d = dataset.dim();
    let mut r = rng(seed);
    let mut points = Vec::with_capacity(dataset.len());
    for i in 0..dataset.len() {
        let x = dataset.point(i);
        let step: Vec<f64> = match metric {
            GroundMetric::Linf => (0..d)
                .map(|_| epsilon * r.random_range(-1.0..=1.0))
                .collect(),
            GroundMetric::L2 => {
                let dir: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                let radius = epsilon * r.random::<f64>();
                if norm > 0.0 {
                    dir.iter().map(|v| radius * v / norm).collect()
                } else {
                    vec![0.0; d]
                }
            }
        };
        points.push(
            x.iter()
                .zip(&step)
                .map(|(x, s)| x + s)
                .collect::<Vec<f64>>(),
        );
    }
    let targets = match target {
        Some(f) => points.iter().map(|x| f(x)).collect(),
        None => dataset.targets().to_vec(),
    };
    Dataset::new(points, targets, Some(dataset.weights().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let xs: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![i as f64 / 10.0 - 1.0, (i as f64).cos()])
            .collect();
        let f = xs.iter().map(|x| x[0] * x[1]).collect();
        Dataset::new(xs, f, None).unwrap()
    }

    #[test]
    fn noise_has_requested_norm() {
        let ds = toy();
        let noisy = add_measurement_noise(&ds, 0.03, 7).unwrap();
        let diff: Vec<f64> = noisy
            .targets()
            .iter()
            .zip(ds.targets())
            .map(|(a, b)| a - b)
            .collect();
        assert!((ds.norm(&diff) - 0.03).abs() < 1e-12);
        assert_eq!(noisy, add_measurement_noise(&ds, 0.03, 7).unwrap());
    }

    #[test]
    fn zero_noise_is_identity() {
        let ds = toy();
        let same = add_measurement_noise(&ds, 0.0, 1).unwrap();
        assert_eq!(same.targets(), ds.targets());
    }

    #[test]
    fn reweight_respects_ratio_bound() {
        let ds = toy();
        let rw = radon_nikodym_reweight(&ds, 0.2, 3).unwrap();
        let worst = rw
            .weights()
            .iter()
            .zip(ds.weights())
            .map(|(a, b)| (a / b - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.2 + 1e-12);
        assert!((rw.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn full_subsample_of_single_point_is_same() {
        let ds = Dataset::new(vec![vec![0.5]], vec![2.0], None).unwrap();
        assert_eq!(monte_carlo_subsample(&ds, 1, 9).unwrap(), ds);
    }

    #[test]
    fn shift_stays_within_radius() {
        let ds = toy();
        for metric in [GroundMetric::L2, GroundMetric::Linf] {
            let sh = wasserstein_shift(&ds, 0.1, 5, metric, None).unwrap();
            for i in 0..ds.len() {
                assert!(metric.distance(ds.point(i), sh.point(i)) <= 0.1 + 1e-15);
            }
        }
    }

    #[test]
    fn validation_names_the_field() {
        let spec = PerturbationSpec {
            kind: PerturbationKind::RadonNikodym { epsilon: 2.0 },
            seed: 0,
        };
        let msg = spec.validate(10).unwrap_err().to_string();
        assert!(msg.contains("epsilon"), "{msg}");
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec: PerturbationSpec =
            serde_json::from_str(r#"{"kind":"noise","delta":0.1,"seed":4}"#).unwrap();
        assert_eq!(spec.kind, PerturbationKind::Noise { delta: 0.1 });
        assert_eq!(spec.seed, 4);
    }
}
