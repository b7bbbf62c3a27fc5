use microlp::{ComparisonOp, OptimizationDirection};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::operator::Dataset;

/// Distance between sample points used as transport cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundMetric {
    #[default]
    L2,
    Linf,
}

impl GroundMetric {
    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            GroundMetric::L2 => x
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            GroundMetric::Linf => x.iter().zip(y).fold(0.0, |m, (a, b)| m.max((a - b).abs())),
        }
    }
}

/// Optimal transport cost between two weighted point clouds (targets are ignored).
/// Intended for supports of at most a few hundred points.
pub fn wasserstein1(a: &Dataset, b: &Dataset, metric: GroundMetric) -> Result<f64> {
    check_len("wasserstein dimension", a.dim(), b.dim())?;
    let (na, nb) = (a.len(), b.len());
    let mut lp = microlp::Problem::new(OptimizationDirection::Minimize);
    let mut vars = Vec::with_capacity(na * nb);
    for i in 0..na {
        for j in 0..nb {
            let d = metric.distance(a.point(i), b.point(j));
            vars.push(lp.add_var(d, (0.0, f64::INFINITY)));
        }
    }
    for i in 0..na {
        let row: Vec<_> = (0..nb).map(|j| (vars[i * nb + j], 1.0)).collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, a.weights()[i]);
    }
    // one column marginal is implied by the others
    for j in 0..nb.saturating_sub(1) {
        let col: Vec<_> = (0..na).map(|i| (vars[i * nb + j], 1.0)).collect();
        lp.add_constraint(col.as_slice(), ComparisonOp::Eq, b.weights()[j]);
    }
    let outcome = lp
        .solve()
        .map_err(|e| Error::LinearProgram(format!("transport program: {e}")))?;
    let sol = outcome
        .into_solution()
        .map_err(|_| Error::LinearProgram("transport program returned no solution".into()))?;
    let mut cost = 0.0;
    for i in 0..na {
        for j in 0..nb {
            let pi = sol[vars[i * nb + j]].max(0.0);
            cost += pi * metric.distance(a.point(i), b.point(j));
        }
    }
    Ok(cost)
}
