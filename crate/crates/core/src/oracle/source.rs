use nalgebra::{DMatrix, DVector};

use super::scaled_system;
use crate::error::{check_len, Result};
use crate::linalg::{ldp, min_norm_solve, null_space};
use crate::measure::SparseMeasure;
use crate::solver::Problem;

/// Minimal-norm `phi` with `L_rho phi = V sign(mu)` on the support of `mu`
/// and `|L_rho phi| <= V` elsewhere.
#[derive(Debug, Clone)]
pub struct SourceElement {
    /// `phi(x_i)`; absent when the constraints could not be met.
    pub phi: Option<Vec<f64>>,
    pub satisfied: bool,
    /// `||phi||_{L^2(rho)}`, zero when absent.
    pub norm: f64,
    /// Largest violation of either constraint family.
    pub violation: f64,
}

const FEAS_TOL: f64 = 1e-8;

pub fn source_element(problem: &Problem, mu: &SparseMeasure) -> Result<SourceElement> {
    check_len("source_element measure", problem.n_atoms(), mu.len())?;
    let (b, _, sqrt_w) = scaled_system(problem);
    let v = problem.atoms().weights();
    let (m, n) = b.shape();
    let support = mu.support();
    let off: Vec<usize> = (0..n).filter(|k| mu.coefficients[*k] == 0.0).collect();
    let missing = SourceElement {
        phi: None,
        satisfied: false,
        norm: 0.0,
        violation: f64::INFINITY,
    };

    // equality part: B_S^T psi = V_S sign(c_S)
    let bs_t = DMatrix::from_fn(support.len(), m, |k, i| b[(i, support[k])]);
    let target = DVector::from_fn(support.len(), |k, _| {
        v[support[k]] * mu.coefficients[support[k]].signum()
    });
    let (psi0, z) = if support.is_empty() {
        (DVector::zeros(m), DMatrix::identity(m, m))
    } else {
        (min_norm_solve(&bs_t, &target), null_space(&bs_t))
    };
    if !support.is_empty() && (&bs_t * &psi0 - &target).amax() > FEAS_TOL {
        return Ok(missing);
    }

    // off-support box, rewritten as G z >= h
    let mut g = DMatrix::zeros(2 * off.len(), z.ncols());
    let mut h = DVector::zeros(2 * off.len());
    for (r, &k) in off.iter().enumerate() {
        let col = b.column(k);
        let bz = z.tr_mul(&col);
        let b0 = col.dot(&psi0);
        for j in 0..z.ncols() {
            g[(2 * r, j)] = -bz[j];
            g[(2 * r + 1, j)] = bz[j];
        }
        h[2 * r] = b0 - v[k];
        h[2 * r + 1] = -v[k] - b0;
    }
    let zsol = match ldp(&g, &h)? {
        Some(zs) => zs,
        None => return Ok(missing),
    };
    let psi = &psi0 + &z * zsol;

    let p = b.tr_mul(&psi);
    let mut violation = 0.0f64;
    for k in 0..n {
        let c = mu.coefficients[k];
        let viol = if c != 0.0 {
            (p[k] - v[k] * c.signum()).abs()
        } else {
            (p[k].abs() - v[k]).max(0.0)
        };
        violation = violation.max(viol);
    }
    // rounding in B^T psi grows with the length of psi
    let col_max = (0..n).map(|k| b.column(k).norm()).fold(0.0, f64::max);
    if violation > FEAS_TOL * (1.0 + col_max * psi.norm() * 1e-6) {
        return Ok(SourceElement {
            violation,
            ..missing
        });
    }
    let phi: Vec<f64> = (0..m)
        .map(|i| {
            if sqrt_w[i] > 0.0 {
                psi[i] / sqrt_w[i]
            } else {
                0.0
            }
        })
        .collect();
    Ok(SourceElement {
        phi: Some(phi),
        satisfied: true,
        norm: psi.norm(),
        violation,
    })
}
