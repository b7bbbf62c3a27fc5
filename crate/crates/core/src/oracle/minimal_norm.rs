use microlp::{ComparisonOp, OptimizationDirection};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::scaled_system;
use super::source::{source_element, SourceElement};
use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::measure::{consistent, weighted_l1, DualVariable, SparseMeasure};
use crate::solver::{max_abs, Problem};

/// Minimal-`J` least-squares solution with its certificate.
#[derive(Debug, Clone, Serialize)]
pub struct ReferenceSolution {
    pub mu_dagger: SparseMeasure,
    /// `L_rho phi` when a source element was found, otherwise `V sign(mu)`.
    pub p_dagger: DualVariable,
    /// Source element values `phi(x_i)`.
    pub phi: Option<Vec<f64>>,
    /// `||phi||_{L^2(rho)}`.
    pub phi_norm: f64,
    pub certified: bool,
    pub j_value: f64,
    pub loss: f64,
    /// `max |L_rho(f - K mu)|`.
    pub orthogonality_residual: f64,
    /// Numerical rank of the scaled design matrix.
    pub rank: usize,
}

/// Solves `min J(mu)` over all minimizers of the loss.
///
/// The solution set is written as `V_r^T c = S_r^{-1} U_r^T y` through the
/// thin SVD of `sqrt(W) A`, and the weighted l1 objective is minimized by
/// linear programming. Intended for `N <= 200`, `m <= 500`.
pub fn minimal_norm_minimizer(problem: &Problem) -> Result<ReferenceSolution> {
    let (b, y, _) = scaled_system(problem);
    let v = problem.atoms().weights();
    let (m, n) = b.shape();
    let svd = b.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = smax * 1e-12 * (m.max(n) as f64);
    let kept: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&j| svd.singular_values[j] > tol)
        .collect();
    let rank = kept.len();

    let c = if rank == 0 {
        vec![0.0; n]
    } else if rank == n {
        least_squares(&b, &y).x.iter().copied().collect()
    } else {
        let u = svd.u.as_ref().expect("left vectors requested");
        let vt = svd.v_t.as_ref().expect("right vectors requested");
        let rhs: Vec<f64> = kept
            .iter()
            .map(|&j| u.column(j).dot(&y) / svd.singular_values[j])
            .collect();
        let rows: Vec<Vec<f64>> = kept
            .iter()
            .map(|&j| vt.row(j).iter().copied().collect())
            .collect();
        let lp = solve_lp(&rows, &rhs, v)?;
        polish(&b, &y, lp)
    };

    let mu = SparseMeasure { coefficients: c };
    let g = problem.dual_velocity(&mu.coefficients);
    let orthogonality_residual = max_abs(&g);
    let src: SourceElement = source_element(problem, &mu)?;
    let p_values: Vec<f64> = match &src.phi {
        Some(phi) => {
            crate::operator::backproject(phi, problem.design(), problem.dataset().weights())?
        }
        None => (0..n).map(|k| v[k] * mu.coefficients[k].signum()).collect(),
    };
    let feasible = p_values.iter().zip(v).all(|(p, v)| p.abs() <= v + 1e-9);
    let certified = src.satisfied
        && feasible
        && consistent(&mu.coefficients, &p_values, v, 1e-9)
        && orthogonality_residual <= 1e-8;
    Ok(ReferenceSolution {
        j_value: weighted_l1(&mu.coefficients, v),
        loss: problem.loss(&mu.coefficients),
        mu_dagger: mu,
        p_dagger: DualVariable {
            values: p_values,
            time: 0.0,
        },
        phi: src.phi,
        phi_norm: src.norm,
        certified,
        orthogonality_residual,
        rank,
    })
}

// min sum V (c+ + c-) subject to M (c+ - c-) = d
fn solve_lp(rows: &[Vec<f64>], rhs: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let n = v.len();
    let mut lp = microlp::Problem::new(OptimizationDirection::Minimize);
    let plus: Vec<_> = (0..n)
        .map(|k| lp.add_var(v[k], (0.0, f64::INFINITY)))
        .collect();
    let minus: Vec<_> = (0..n)
        .map(|k| lp.add_var(v[k], (0.0, f64::INFINITY)))
        .collect();
    for (row, d) in rows.iter().zip(rhs) {
        let terms: Vec<_> = (0..n)
            .flat_map(|k| [(plus[k], row[k]), (minus[k], -row[k])])
            .collect();
        lp.add_constraint(terms.as_slice(), ComparisonOp::Eq, *d);
    }
    let outcome = lp
        .solve()
        .map_err(|e| Error::LinearProgram(format!("minimal-norm program: {e}")))?;
    let sol = outcome
        .into_solution()
        .map_err(|_| Error::LinearProgram("minimal-norm program returned no solution".into()))?;
    Ok((0..n).map(|k| sol[plus[k]] - sol[minus[k]]).collect())
}

// Re-solve least squares on the LP support to remove simplex round-off.
fn polish(b: &DMatrix<f64>, y: &DVector<f64>, c: Vec<f64>) -> Vec<f64> {
    let scale = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let support: Vec<usize> = (0..c.len())
        .filter(|&k| c[k].abs() > 1e-9 * scale)
        .collect();
    let mut out = vec![0.0; c.len()];
    if support.is_empty() {
        return out;
    }
    let bs = DMatrix::from_fn(b.nrows(), support.len(), |i, k| b[(i, support[k])]);
    let ls = least_squares(&bs, y);
    if ls.rank_deficient {
        return c;
    }
    for (k, &j) in support.iter().enumerate() {
        if ls.x[k] * c[j] <= 0.0 {
            return c;
        }
        out[j] = ls.x[k];
    }
    // the polished fit must still solve the normal equations
    let g = b.tr_mul(&(y - b * DVector::from_column_slice(&out)));
    let g_lp = b.tr_mul(&(y - b * DVector::from_column_slice(&c)));
    if g.amax() <= g_lp.amax().max(1e-12) {
        out
    } else {
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Atom, AtomSet, WeightVariant};
    use crate::operator::{Activation, Dataset};

    #[test]
    fn zero_data_gives_zero_measure() {
        let ds = Dataset::new(vec![vec![0.0], vec![1.0]], vec![0.0, 0.0], None).unwrap();
        let atoms = AtomSet::with_bounding_box(
            vec![
                Atom::new(vec![1.0], 0.0),
                Atom::new(vec![-1.0], 0.5),
                Atom::new(vec![0.5], 0.5),
            ],
            WeightVariant::WithConstant,
        )
        .unwrap();
        let prob = Problem::new(ds, atoms, Activation::relu()).unwrap();
        let r = minimal_norm_minimizer(&prob).unwrap();
        assert!(r.mu_dagger.coefficients.iter().all(|c| *c == 0.0));
        assert!(r.certified);
    }

    #[test]
    fn single_column_exact_fit() {
        // f = 2 * relu(x) is reproduced by the first atom alone
        let xs = [-1.0, 0.0, 0.5, 1.0, 2.0];
        let ds = Dataset::new(
            xs.iter().map(|x| vec![*x]).collect(),
            xs.iter().map(|x: &f64| 2.0 * x.max(0.0)).collect(),
            None,
        )
        .unwrap();
        let atoms = AtomSet::with_bounding_box(
            vec![
                Atom::new(vec![1.0], 0.0),
                Atom::new(vec![-1.0], 0.5),
                Atom::new(vec![0.5], 0.5),
                Atom::new(vec![2.0], -1.0),
                Atom::new(vec![1.0], 1.0),
                Atom::new(vec![-2.0], 1.0),
                Atom::new(vec![0.25], -0.25),
            ],
            WeightVariant::WithConstant,
        )
        .unwrap();
        let prob = Problem::new(ds, atoms, Activation::relu()).unwrap();
        let r = minimal_norm_minimizer(&prob).unwrap();
        assert!(r.loss < 1e-20);
        assert!(r.j_value <= 2.0 * 2.0 + 1e-9);
        assert!(r.certified, "{r:?}");
    }
}
