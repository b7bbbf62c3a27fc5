use nalgebra::{DMatrix, DVector};

use super::Problem;
use crate::error::{check_len, Error, Result};
use crate::linalg::nnls;
use crate::measure::SparseMeasure;

/// Least-squares fit restricted to a signed face of the dual ball.
#[derive(Debug, Clone)]
pub struct RestrictedLsq {
    pub measure: SparseMeasure,
    /// `L_rho (f - K mu)` after the solve, over all atoms.
    pub velocity: Vec<f64>,
    /// Atoms with nonzero coefficient.
    pub support: Vec<usize>,
    pub loss: f64,
    /// The passive columns were numerically dependent; the minimal-norm
    /// coefficients were used.
    pub rank_deficient: bool,
}

/// Minimizes the loss over measures supported on `active` with
/// `sign(c_n) = signs[k]` or `c_n = 0`.
pub fn signed_restricted_lsq(
    problem: &Problem,
    active: &[usize],
    signs: &[f64],
) -> Result<RestrictedLsq> {
    solve_signed(problem, active, signs, &[])
}

/// Same as [`signed_restricted_lsq`] with a warm-start guess of the support
/// (atom indices).
pub(crate) fn solve_signed(
    problem: &Problem,
    active: &[usize],
    signs: &[f64],
    warm: &[usize],
) -> Result<RestrictedLsq> {
    check_len("signed_restricted_lsq signs", active.len(), signs.len())?;
    let n = problem.n_atoms();
    if let Some(&bad) = active.iter().find(|&&k| k >= n) {
        return Err(Error::InvalidInput(format!(
            "active index {bad} out of range"
        )));
    }
    if signs.iter().any(|s| *s != 1.0 && *s != -1.0) {
        return Err(Error::InvalidInput("signs must be +1 or -1".into()));
    }
    let ds = problem.dataset();
    let m = ds.len();
    let sqrt_w: Vec<f64> = ds.weights().iter().map(|w| w.sqrt()).collect();
    let design = problem.design();
    let b = DMatrix::from_fn(m, active.len(), |i, k| {
        sqrt_w[i] * design.entry(i, active[k]) * signs[k]
    });
    let y = DVector::from_fn(m, |i, _| sqrt_w[i] * ds.targets()[i]);

    let col_max = (0..active.len())
        .map(|k| b.column(k).norm())
        .fold(0.0, f64::max);
    let tol = 1e-13 * (col_max * y.norm()).max(f64::MIN_POSITIVE);
    let warm_local: Vec<usize> = active
        .iter()
        .enumerate()
        .filter(|(_, a)| warm.contains(a))
        .map(|(k, _)| k)
        .collect();
    let sol = nnls(&b, &y, &warm_local, tol)?;

    let mut c = vec![0.0; n];
    for (k, &a) in active.iter().enumerate() {
        c[a] = sol.x[k] * signs[k];
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("restricted least squares".into()));
    }
    let velocity = problem.dual_velocity(&c);
    let loss = problem.loss(&c);
    let support = (0..n).filter(|&k| c[k] != 0.0).collect();
    Ok(RestrictedLsq {
        measure: SparseMeasure { coefficients: c },
        velocity,
        support,
        loss,
        rank_deficient: sol.rank_deficient,
    })
}
