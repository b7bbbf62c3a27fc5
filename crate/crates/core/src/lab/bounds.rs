use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::measure::{consistent, weighted_l1, AtomSet, SparseMeasure};
use crate::operator::Dataset;
use crate::oracle::{GroundMetric, ReferenceSolution};
use crate::solver::{FlowTrajectory, Problem};

/// Tolerance of the subgradient check inside [`bregman_distance`].
const CONSISTENCY_TOL: f64 = 1e-8;

/// Left- and right-hand side of a bound evaluated along a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub times: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub slack: Vec<f64>,
    pub theorem_id: String,
    /// False when a hypothesis (usually a source element) is missing.
    pub applicable: bool,
    /// True when some term was estimated from finitely many samples.
    pub estimate: bool,
    pub notes: Vec<String>,
}

impl BoundReport {
    pub(crate) fn from_parts(
        theorem_id: &str,
        times: Vec<f64>,
        lhs: Vec<f64>,
        rhs: Vec<f64>,
        applicable: bool,
    ) -> Self {
        let slack = rhs.iter().zip(&lhs).map(|(r, l)| r - l).collect();
        BoundReport {
            times,
            lhs,
            rhs,
            slack,
            theorem_id: theorem_id.to_string(),
            applicable,
            estimate: false,
            notes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Smallest slack, `+inf` for an empty report.
    pub fn min_slack(&self) -> f64 {
        self.slack.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Applicable and `slack >= -tol` everywhere.
    pub fn holds(&self, tol: f64) -> bool {
        self.applicable && self.slack.iter().all(|s| *s >= -tol)
    }

    /// Writes `t,lhs,rhs,slack,theorem_id,applicable`.
    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "lhs", "rhs", "slack", "theorem_id", "applicable"])?;
        for k in 0..self.len() {
            w.write_record([
                self.times[k].to_string(),
                self.lhs[k].to_string(),
                self.rhs[k].to_string(),
                self.slack[k].to_string(),
                self.theorem_id.clone(),
                self.applicable.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `J(mu_ref) - J(mu) - <p, mu_ref - mu>`; `p` must be a subgradient of `J` at `mu`.
pub fn bregman_distance(
    mu_ref: &SparseMeasure,
    mu: &SparseMeasure,
    p: &[f64],
    atoms: &AtomSet,
) -> Result<f64> {
    check_len("bregman_distance reference", atoms.len(), mu_ref.len())?;
    check_len("bregman_distance measure", atoms.len(), mu.len())?;
    check_len("bregman_distance dual", atoms.len(), p.len())?;
    let v = atoms.weights();
    let feasible = p.iter().zip(v).all(|(p, v)| p.abs() <= v + CONSISTENCY_TOL);
    if !feasible || !consistent(&mu.coefficients, p, v, CONSISTENCY_TOL) {
        return Err(Error::Inconsistent(
            "dual is not a subgradient of J at the measure".into(),
        ));
    }
    let cross: f64 = (0..atoms.len())
        .map(|k| p[k] * (mu_ref.coefficients[k] - mu.coefficients[k]))
        .sum();
    Ok(weighted_l1(&mu_ref.coefficients, v) - weighted_l1(&mu.coefficients, v) - cross)
}

/// Positive breakpoint times together with the midpoint of every segment.
pub fn report_times(trajectory: &FlowTrajectory) -> Vec<f64> {
    let ts = trajectory.times();
    let mut out = Vec::with_capacity(2 * ts.len());
    for k in 0..ts.len() {
        if k > 0 && ts[k] > ts[k - 1] {
            out.push(0.5 * (ts[k - 1] + ts[k]));
        }
        if ts[k] > 0.0 {
            out.push(ts[k]);
        }
    }
    out
}

fn bregman_along(
    trajectory: &FlowTrajectory,
    mu_ref: &SparseMeasure,
    atoms: &AtomSet,
    times: &[f64],
) -> Result<Vec<f64>> {
    times
        .iter()
        .map(|&t| {
            bregman_distance(
                mu_ref,
                trajectory.measure_at(t),
                &trajectory.dual_at(t),
                atoms,
            )
        })
        .collect()
}

/// `R_f(mu_t) <= R_f(mu_dagger) + J(mu_dagger) / t` at the positive breakpoints.
pub fn ideal_loss_report(
    trajectory: &FlowTrajectory,
    reference: &ReferenceSolution,
) -> BoundReport {
    let (mut times, mut lhs, mut rhs) = (Vec::new(), Vec::new(), Vec::new());
    for b in trajectory.breakpoints.iter().filter(|b| b.t > 0.0) {
        times.push(b.t);
        lhs.push(b.loss);
        rhs.push(reference.loss + reference.j_value / b.t);
    }
    BoundReport::from_parts("ideal_loss", times, lhs, rhs, true)
}

/// `D(mu_dagger, mu_t) <= ||phi||^2 / 2t`, applicable when the reference is certified.
pub fn ideal_bregman_report(
    trajectory: &FlowTrajectory,
    reference: &ReferenceSolution,
    atoms: &AtomSet,
) -> Result<BoundReport> {
    let times = report_times(trajectory);
    let lhs = bregman_along(trajectory, &reference.mu_dagger, atoms, &times)?;
    let applicable = reference.certified && reference.phi.is_some();
    let phi_sq = reference.phi_norm * reference.phi_norm;
    let rhs = times
        .iter()
        .map(|t| {
            if applicable {
                phi_sq / (2.0 * t)
            } else {
                f64::NAN
            }
        })
        .collect();
    Ok(BoundReport::from_parts(
        "ideal_bregman",
        times,
        lhs,
        rhs,
        applicable,
    ))
}

/// `(||phi|| + delta t)^2 / 2t + delta^2 t / 8`.
pub fn noise_bound_rhs(phi_norm: f64, delta: f64, t: f64) -> f64 {
    (phi_norm + delta * t).powi(2) / (2.0 * t) + delta * delta * t / 8.0
}

/// Minimizer `2 ||phi|| / (sqrt(5) delta)` of [`noise_bound_rhs`].
pub fn noise_optimal_time(phi_norm: f64, delta: f64) -> f64 {
    2.0 * phi_norm / (5f64.sqrt() * delta)
}

/// Bound report for a flow on noisy targets against the clean reference.
#[derive(Debug, Clone, Serialize)]
pub struct NoiseBoundReport {
    pub report: BoundReport,
    /// Time minimizing the right-hand side.
    pub optimal_time: f64,
    /// Largest difference quotient of the Bregman distance between breakpoints.
    pub max_slope: f64,
    /// `delta^2 / 4`.
    pub slope_cap: f64,
}

/// Evaluates `D(mu_dagger, nu_t) <= (||phi|| + delta t)^2 / 2t + delta^2 t / 8`
/// where `delta` bounds `||f^delta - f||_{L^2(rho)}` (a norm, not a squared norm).
pub fn noise_bound_report(
    trajectory: &FlowTrajectory,
    reference: &ReferenceSolution,
    atoms: &AtomSet,
    delta: f64,
) -> Result<NoiseBoundReport> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "delta must be nonnegative, got {delta}"
        )));
    }
    let times = report_times(trajectory);
    let lhs = bregman_along(trajectory, &reference.mu_dagger, atoms, &times)?;
    let applicable = reference.certified && reference.phi.is_some();
    let rhs: Vec<f64> = if applicable {
        times
            .iter()
            .map(|&t| noise_bound_rhs(reference.phi_norm, delta, t))
            .collect()
    } else {
        vec![f64::NAN; times.len()]
    };
    let mut report = BoundReport::from_parts("noise", times, lhs, rhs, applicable);
    report
        .notes
        .push("delta is read as a bound on the L2(rho) norm of the target perturbation".into());

    let mut max_slope = f64::NEG_INFINITY;
    let mut prev: Option<(f64, f64)> = None;
    for b in &trajectory.breakpoints {
        let d = bregman_distance(&reference.mu_dagger, &b.mu, &b.p.values, atoms)?;
        if let Some((t0, d0)) = prev {
            if b.t > t0 {
                max_slope = max_slope.max((d - d0) / (b.t - t0));
            }
        }
        prev = Some((b.t, d));
    }
    Ok(NoiseBoundReport {
        report,
        optimal_time: if applicable {
            noise_optimal_time(reference.phi_norm, delta)
        } else {
            f64::NAN
        },
        max_slope,
        slope_cap: delta * delta / 4.0,
    })
}

/// `int_0^t int_0^tau F(nu_tau - nu_s) ds dtau` for a measure that is
/// constant on `[times[k], times[k+1])`, with `pair[i][j] = F(nu_i - nu_j)`
/// symmetric and zero on the diagonal. Times past the last breakpoint keep
/// the last measure.
pub fn pairwise_double_integral(times: &[f64], pair: &[Vec<f64>], t: f64) -> f64 {
    let k_max = times.len();
    if k_max == 0 || t <= times[0] {
        return 0.0;
    }
    let len = |i: usize| -> f64 {
        let end = if i + 1 < k_max {
            times[i + 1].min(t)
        } else {
            t
        };
        (end - times[i]).max(0.0)
    };
    let mut total = 0.0;
    for j in 0..k_max {
        let lj = len(j);
        if lj == 0.0 {
            continue;
        }
        for i in 0..j {
            total += len(i) * lj * pair[i][j];
        }
    }
    total
}

/// Which density assumption the bias bound uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum BiasVariant {
    /// No assumption; works with the signed measure `rho^eps - rho`.
    General,
    /// Density ratio within `[1 - epsilon, 1 + epsilon]`.
    RadonNikodym { epsilon: f64 },
    /// Monte Carlo subsample of `m_sub` points, valid with probability `1 - delta_prob`.
    Sampling { m_sub: usize, delta_prob: f64 },
    /// `W_1(rho, rho^eps) <= epsilon` in `metric`.
    Wasserstein {
        epsilon: f64,
        #[serde(default)]
        metric: GroundMetric,
    },
}

impl BiasVariant {
    pub fn tag(&self) -> &'static str {
        match self {
            BiasVariant::General => "bias_general",
            BiasVariant::RadonNikodym { .. } => "bias_radon",
            BiasVariant::Sampling { .. } => "bias_sampling",
            BiasVariant::Wasserstein { .. } => "bias_wasserstein",
        }
    }
}

/// Largest `|g(x) - g(y)| / d(x, y)` over pairs of the given points. Returns
/// `inf` when two coincident points carry different values.
pub fn lipschitz_estimate(points: &[&[f64]], values: &[f64], metric: GroundMetric) -> f64 {
    let mut lip = 0.0f64;
    for i in 0..points.len() {
        for j in 0..i {
            let dv = (values[i] - values[j]).abs();
            let dx = metric.distance(points[i], points[j]);
            if dx > 0.0 {
                lip = lip.max(dv / dx);
            } else if dv > 0.0 {
                return f64::INFINITY;
            }
        }
    }
    lip
}

/// `sup |g| + Lip(g)` over the given points.
pub fn c01_norm_estimate(points: &[&[f64]], values: &[f64], metric: GroundMetric) -> f64 {
    let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    sup + lipschitz_estimate(points, values, metric)
}

/// `||g||^2_{L^2(rho^eps)} - ||g||^2_{L^2(rho)}`, the squared seminorm of the signed measure.
pub fn signed_norm_sq(rho: &Dataset, g_rho: &[f64], rho_eps: &Dataset, g_eps: &[f64]) -> f64 {
    rho_eps.norm_sq(g_eps) - rho.norm_sq(g_rho)
}

/// `||g||^2_{L^4(rho)} = (sum w g^4)^{1/2}`.
pub fn l4_norm_sq(rho: &Dataset, g: &[f64]) -> f64 {
    rho.weights()
        .iter()
        .zip(g)
        .map(|(w, g)| w * g.powi(4))
        .sum::<f64>()
        .sqrt()
}

/// Deviation radius `||g||^2_{L^4(rho)} / sqrt(m_sub delta_prob)` that the
/// subsampled squared norm exceeds with probability at most `delta_prob`.
pub fn chebyshev_radius(rho: &Dataset, g: &[f64], m_sub: usize, delta_prob: f64) -> f64 {
    l4_norm_sq(rho, g) / (m_sub as f64 * delta_prob).sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(a, b)| a - b).collect()
}

/// Evaluates one of the sampling-bias bounds on `D(mu_dagger, nu_t)` for a
/// flow run on `biased`, with `mu_dagger` from `clean` and `nu_dagger` from `biased`.
pub fn bias_bound_report(
    trajectory: &FlowTrajectory,
    clean: &Problem,
    biased: &Problem,
    reference_clean: &ReferenceSolution,
    reference_biased: &ReferenceSolution,
    variant: BiasVariant,
) -> Result<BoundReport> {
    if clean.atoms() != biased.atoms() {
        return Err(Error::InvalidInput(
            "clean and biased problems must share the atom set".into(),
        ));
    }
    check_len(
        "bias reference",
        clean.n_atoms(),
        reference_clean.mu_dagger.len(),
    )?;
    check_len(
        "bias reference",
        clean.n_atoms(),
        reference_biased.mu_dagger.len(),
    )?;
    let atoms = clean.atoms();
    let times = report_times(trajectory);
    let lhs = bregman_along(trajectory, &reference_clean.mu_dagger, atoms, &times)?;
    let applicable =
        reference_clean.certified && reference_biased.certified && reference_clean.phi.is_some();

    let (rho, rho_eps) = (clean.dataset(), biased.dataset());
    let mu_d = &reference_clean.mu_dagger.coefficients;
    let nu_d = &reference_biased.mu_dagger.coefficients;
    let r_clean = clean.residual(mu_d);
    let r_mu_biased = biased.residual(mu_d);
    let gap_biased = diff(&biased.predict(nu_d), &biased.predict(mu_d));

    let union: Vec<&[f64]> = (0..rho.len())
        .map(|i| rho.point(i))
        .chain((0..rho_eps.len()).map(|i| rho_eps.point(i)))
        .collect();
    let on_union = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().chain(b).copied().collect() };

    // pairwise term F(nu_i - nu_j) and the coefficient of t
    let preds_clean: Vec<Vec<f64>> = trajectory
        .breakpoints
        .iter()
        .map(|b| clean.predict(&b.mu.coefficients))
        .collect();
    let preds_biased: Vec<Vec<f64>> = trajectory
        .breakpoints
        .iter()
        .map(|b| biased.predict(&b.mu.coefficients))
        .collect();
    let pair_value = |i: usize, j: usize| -> f64 {
        let hc = diff(&preds_clean[i], &preds_clean[j]);
        let hb = diff(&preds_biased[i], &preds_biased[j]);
        match variant {
            BiasVariant::General => signed_norm_sq(rho, &hc, rho_eps, &hb),
            BiasVariant::RadonNikodym { epsilon } => {
                epsilon / (1.0 + epsilon) * rho_eps.norm_sq(&hb)
            }
            BiasVariant::Sampling { m_sub, delta_prob } => {
                chebyshev_radius(rho, &hc, m_sub, delta_prob)
            }
            BiasVariant::Wasserstein { epsilon, metric } => {
                2.0 * epsilon * c01_norm_estimate(&union, &on_union(&hc, &hb), metric).powi(2)
            }
        }
    };
    let linear = match variant {
        BiasVariant::General => {
            signed_norm_sq(rho, &r_clean, rho_eps, &r_mu_biased) / 4.0
                + rho_eps.norm_sq(&gap_biased) / 8.0
        }
        BiasVariant::RadonNikodym { epsilon } => {
            (2.0 * epsilon + 1.0) / 4.0 * rho.norm_sq(&r_clean)
                + rho_eps.norm_sq(&biased.residual(nu_d)) / 4.0
        }
        BiasVariant::Sampling { m_sub, delta_prob } => {
            chebyshev_radius(rho, &r_clean, m_sub, delta_prob) / 4.0
                + rho_eps.norm_sq(&gap_biased) / 8.0
        }
        BiasVariant::Wasserstein { epsilon, metric } => {
            epsilon / 2.0
                * c01_norm_estimate(&union, &on_union(&r_clean, &r_mu_biased), metric).powi(2)
                + rho_eps.norm_sq(&gap_biased) / 8.0
        }
    };

    let k = trajectory.len();
    let mut pair = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..i {
            let v = pair_value(i, j);
            pair[i][j] = v;
            pair[j][i] = v;
        }
    }
    let bp_times = trajectory.times();
    let phi_sq = reference_clean.phi_norm * reference_clean.phi_norm;
    let rhs: Vec<f64> = times
        .iter()
        .map(|&t| {
            if !applicable {
                return f64::NAN;
            }
            phi_sq / (2.0 * t)
                + pairwise_double_integral(&bp_times, &pair, t) / (2.0 * t)
                + linear * t
        })
        .collect();

    let mut report = BoundReport::from_parts(variant.tag(), times, lhs, rhs, applicable);
    match variant {
        BiasVariant::Sampling { delta_prob, .. } => report.notes.push(format!(
            "holds with probability at least {}",
            1.0 - delta_prob
        )),
        BiasVariant::Wasserstein { .. } => {
            report.estimate = true;
            report.notes.push(
                "Lipschitz seminorms are lower estimates over the sample points of both measures"
                    .into(),
            );
            if rho.len() == rho_eps.len() && rho.targets() != rho_eps.targets() {
                report
                    .notes
                    .push("targets differ between the two samples".into());
            }
        }
        _ => {}
    }
    Ok(report)
}

/// Outcome of the discrepancy principle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscrepancyStop {
    pub time: f64,
    /// Breakpoint index.
    pub index: usize,
    /// False when the threshold was never met (or `tau` is infinite).
    pub reached: bool,
}

/// First breakpoint with `||f^delta - K nu_t||_{L^2(rho)} <= tau delta`.
pub fn discrepancy_stop(
    trajectory: &FlowTrajectory,
    delta: f64,
    tau: f64,
) -> Result<DiscrepancyStop> {
    discrepancy_stop_with_offset(trajectory, delta, tau, 0.0)
}

/// As [`discrepancy_stop`] with threshold `tau delta + offset`, where `offset`
/// is a known clean residual norm `||f - K mu_dagger||`.
pub fn discrepancy_stop_with_offset(
    trajectory: &FlowTrajectory,
    delta: f64,
    tau: f64,
    offset: f64,
) -> Result<DiscrepancyStop> {
    if !(tau >= 1.0) {
        return Err(Error::InvalidInput(format!(
            "tau must be at least 1, got {tau}"
        )));
    }
    if trajectory.is_empty() {
        return Err(Error::InvalidInput("empty trajectory".into()));
    }
    let last = trajectory.len() - 1;
    let never = DiscrepancyStop {
        time: trajectory.last().t,
        index: last,
        reached: false,
    };
    if tau.is_infinite() {
        return Ok(never);
    }
    let threshold = tau * delta + offset;
    Ok(trajectory
        .breakpoints
        .iter()
        .position(|b| (2.0 * b.loss).sqrt() <= threshold)
        .map_or(never, |k| DiscrepancyStop {
            time: trajectory.breakpoints[k].t,
            index: k,
            reached: true,
        }))
}

/// `||K nu_t - K mu_ref||_{L^2(rho)}` at every breakpoint.
pub fn distance_to_reference(
    trajectory: &FlowTrajectory,
    problem: &Problem,
    mu_ref: &SparseMeasure,
) -> Vec<f64> {
    let target = problem.predict(&mu_ref.coefficients);
    trajectory
        .breakpoints
        .iter()
        .map(|b| {
            problem
                .dataset()
                .norm(&diff(&problem.predict(&b.mu.coefficients), &target))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Atom, WeightVariant};

    fn atoms() -> AtomSet {
        AtomSet::with_bounding_box(
            vec![Atom::new(vec![1.0], 0.0), Atom::new(vec![-1.0], 0.5)],
            WeightVariant::WithConstant,
        )
        .unwrap()
    }

    #[test]
    fn distance_to_itself_is_zero() {
        let a = atoms();
        let v = a.weights().to_vec();
        let mu = SparseMeasure::new(vec![0.7, 0.0]).unwrap();
        let d = bregman_distance(&mu, &mu, &[v[0], 0.3], &a).unwrap();
        assert!(d.abs() < 1e-15);
    }

    #[test]
    fn distance_from_origin_is_j() {
        let a = atoms();
        let mu = SparseMeasure::new(vec![0.7, -1.1]).unwrap();
        let d = bregman_distance(&mu, &SparseMeasure::zeros(2), &[0.0, 0.0], &a).unwrap();
        assert!((d - weighted_l1(&mu.coefficients, a.weights())).abs() < 1e-15);
    }

    #[test]
    fn inconsistent_pair_is_rejected() {
        let a = atoms();
        let mu = SparseMeasure::new(vec![0.7, 0.0]).unwrap();
        assert!(bregman_distance(&mu, &mu, &[0.1, 0.0], &a).is_err());
    }

    #[test]
    fn zero_noise_gives_ideal_bound() {
        assert_eq!(noise_bound_rhs(3.0, 0.0, 2.0), 9.0 / 4.0);
    }

    #[test]
    fn optimal_time_minimizes_rhs() {
        let t = noise_optimal_time(1.5, 0.01);
        let r = noise_bound_rhs(1.5, 0.01, t);
        assert!(noise_bound_rhs(1.5, 0.01, t * 1.01) > r);
        assert!(noise_bound_rhs(1.5, 0.01, t * 0.99) > r);
    }

    #[test]
    fn double_integral_of_two_pieces() {
        // values 0 on [0,1), then a jump with F = 2 on [1, t)
        let pair = vec![vec![0.0, 2.0], vec![2.0, 0.0]];
        let got = pairwise_double_integral(&[0.0, 1.0], &pair, 3.0);
        assert!((got - 1.0 * 2.0 * 2.0).abs() < 1e-15);
        assert_eq!(pairwise_double_integral(&[0.0, 1.0], &pair, 0.5), 0.0);
    }

    #[test]
    fn lipschitz_of_linear_function() {
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.3]).collect();
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let vals: Vec<f64> = pts.iter().map(|p| 2.0 * p[0] - 1.0).collect();
        assert!((lipschitz_estimate(&refs, &vals, GroundMetric::L2) - 2.0).abs() < 1e-12);
        assert!((c01_norm_estimate(&refs, &vals, GroundMetric::L2) - 3.4).abs() < 1e-12);
    }

    #[test]
    fn infinite_tau_never_stops() {
        let traj = FlowTrajectory {
            breakpoints: Vec::new(),
            termination: crate::solver::Termination::Horizon,
            warnings: Vec::new(),
        };
        assert!(discrepancy_stop(&traj, 0.1, f64::INFINITY).is_err());
        assert!(discrepancy_stop(&traj, 0.1, 0.5).is_err());
    }
}
