//! Ground-truth computations for small instances.

mod brute_force;
mod minimal_norm;
mod source;
mod wasserstein;

pub use brute_force::{brute_force_flow, brute_force_flow_with, cone_lsq_enumerate};
pub use minimal_norm::{minimal_norm_minimizer, ReferenceSolution};
pub use source::{source_element, SourceElement};
pub use wasserstein::{wasserstein1, GroundMetric};

use nalgebra::{DMatrix, DVector};

use crate::solver::Problem;

/// `sqrt(W) A` and `sqrt(W) f`.
pub(crate) fn scaled_system(problem: &Problem) -> (DMatrix<f64>, DVector<f64>, Vec<f64>) {
    let ds = problem.dataset();
    let sqrt_w: Vec<f64> = ds.weights().iter().map(|w| w.sqrt()).collect();
    let design = problem.design();
    let b = DMatrix::from_fn(ds.len(), problem.n_atoms(), |i, n| {
        sqrt_w[i] * design.entry(i, n)
    });
    let y = DVector::from_fn(ds.len(), |i, _| sqrt_w[i] * ds.targets()[i]);
    (b, y, sqrt_w)
}
