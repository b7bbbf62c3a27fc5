use nalgebra::{DMatrix, DVector};

use super::{make_breakpoint, Event, FlowTrajectory, Problem, Termination};
use crate::error::{check_len, Error, Result};
use crate::linalg::min_norm_solve;
use crate::measure::{DualVariable, SparseMeasure};

/// Settings for [`weighted_lasso`].
#[derive(Debug, Clone, Copy)]
pub struct LassoOptions {
    /// Bound on the optimality residual (violation of the subgradient inclusion).
    pub tol: f64,
    pub max_iter: usize,
    /// Attempt a support-restricted exact solve every this many iterations.
    pub polish_every: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            tol: 1e-10,
            max_iter: 200_000,
            polish_every: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LassoSolution {
    pub coefficients: Vec<f64>,
    /// `offset + lambda * L_rho(f - K c)`, a subgradient of `J` at `c` up to `residual`.
    pub dual: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

struct Scaled {
    b: DMatrix<f64>,
    y: DVector<f64>,
}

impl Scaled {
    fn new(problem: &Problem) -> Self {
        let ds = problem.dataset();
        let sqrt_w: Vec<f64> = ds.weights().iter().map(|w| w.sqrt()).collect();
        let a = problem.design().to_dense();
        let b = DMatrix::from_fn(a.nrows(), a.ncols(), |i, n| sqrt_w[i] * a[(i, n)]);
        let y = DVector::from_fn(ds.len(), |i, _| sqrt_w[i] * ds.targets()[i]);
        Scaled { b, y }
    }

    // L_rho(f - K c)
    fn velocity(&self, c: &DVector<f64>) -> DVector<f64> {
        self.b.tr_mul(&(&self.y - &self.b * c))
    }
}

fn kkt_residual(c: &DVector<f64>, q: &DVector<f64>, v: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for n in 0..v.len() {
        let viol = if c[n] > 0.0 {
            (q[n] - v[n]).abs()
        } else if c[n] < 0.0 {
            (q[n] + v[n]).abs()
        } else {
            (q[n].abs() - v[n]).max(0.0)
        };
        worst = worst.max(viol);
    }
    worst
}

/// Minimizes `J(c) - <offset, c> + lambda * R_f(c)` by accelerated proximal
/// gradient with adaptive restart, finishing with an exact solve on the
/// detected support.
pub fn weighted_lasso(
    problem: &Problem,
    offset: &[f64],
    lambda: f64,
    opts: LassoOptions,
    warm: Option<&[f64]>,
) -> Result<LassoSolution> {
    let n = problem.n_atoms();
    check_len("lasso offset", n, offset.len())?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(
            "lambda must be positive and finite".into(),
        ));
    }
    let v = problem.atoms().weights();
    let sc = Scaled::new(problem);
    let smax =
        sc.b.clone()
            .singular_values()
            .iter()
            .copied()
            .fold(0.0, f64::max);
    let lip = lambda * smax * smax;
    let o = DVector::from_column_slice(offset);
    let up: Vec<f64> = (0..n).map(|k| (v[k] - o[k]).max(0.0)).collect();
    let down: Vec<f64> = (0..n).map(|k| (v[k] + o[k]).max(0.0)).collect();

    let finish = |c: DVector<f64>, iterations: usize| {
        let q = &o + sc.velocity(&c) * lambda;
        let residual = kkt_residual(&c, &q, v);
        LassoSolution {
            coefficients: c.iter().copied().collect(),
            dual: q.iter().copied().collect(),
            residual,
            iterations,
        }
    };

    let mut x = match warm {
        Some(w) => {
            check_len("lasso warm start", n, w.len())?;
            DVector::from_column_slice(w)
        }
        None => DVector::zeros(n),
    };
    if lip == 0.0 {
        // zero design: the minimizer is zero
        return Ok(finish(DVector::zeros(n), 0));
    }
    let mut yk = x.clone();
    let mut tk = 1.0f64;
    let mut best = finish(x.clone(), 0);
    for it in 1..=opts.max_iter {
        let grad = -sc.velocity(&yk) * lambda;
        let z = &yk - grad / lip;
        let x_new = DVector::from_fn(n, |k, _| {
            if z[k] > up[k] / lip {
                z[k] - up[k] / lip
            } else if z[k] < -down[k] / lip {
                z[k] + down[k] / lip
            } else {
                0.0
            }
        });
        if (&yk - &x_new).dot(&(&x_new - &x)) > 0.0 {
            tk = 1.0;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        yk = &x_new + (&x_new - &x) * ((tk - 1.0) / t_new);
        tk = t_new;
        x = x_new;

        if it % opts.polish_every == 0 || it == opts.max_iter {
            let cand = finish(x.clone(), it);
            if cand.residual < best.residual {
                best = cand;
            }
            if best.residual <= opts.tol {
                return Ok(best);
            }
            if let Some(c) = polish(&sc, &x, &o, v, lambda) {
                let cand = finish(c, it);
                if cand.residual <= opts.tol {
                    return Ok(cand);
                }
            }
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        residual: best.residual,
    })
}

// exact stationarity on the current support with the current signs
fn polish(
    sc: &Scaled,
    x: &DVector<f64>,
    o: &DVector<f64>,
    v: &[f64],
    lambda: f64,
) -> Option<DVector<f64>> {
    let support: Vec<usize> = (0..x.len()).filter(|&k| x[k] != 0.0).collect();
    let mut c = DVector::zeros(x.len());
    if support.is_empty() {
        return Some(c);
    }
    let bs = DMatrix::from_fn(sc.b.nrows(), support.len(), |i, k| sc.b[(i, support[k])]);
    let gram = bs.tr_mul(&bs);
    let rhs = DVector::from_fn(support.len(), |k, _| {
        let n = support[k];
        (bs.column(k).dot(&sc.y)) - (v[n] * x[n].signum() - o[n]) / lambda
    });
    let sol = min_norm_solve(&gram, &rhs);
    for (k, &n) in support.iter().enumerate() {
        if sol[k] * x[n] <= 0.0 {
            return None;
        }
        c[n] = sol[k];
    }
    Some(c)
}

/// One Bregman iterate `(mu_k, p_k)`.
#[derive(Debug, Clone)]
pub struct BregmanIterate {
    pub mu: SparseMeasure,
    /// Dual with `time = k * lambda`.
    pub p: DualVariable,
    pub loss: f64,
}

/// Bregman iterations `mu_k = argmin D^{p_{k-1}}(mu, mu_{k-1}) + lambda R_f(mu)`,
/// `p_k = p_{k-1} + lambda L_rho(f - K mu_k)`, starting from zero.
pub fn solve_bregman(
    problem: &Problem,
    lambda: f64,
    iters: usize,
    inner_tol: f64,
) -> Result<Vec<BregmanIterate>> {
    let n = problem.n_atoms();
    let opts = LassoOptions {
        tol: inner_tol,
        ..LassoOptions::default()
    };
    let mut p = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut out = Vec::with_capacity(iters);
    for k in 1..=iters {
        let sol = weighted_lasso(problem, &p, lambda, opts, Some(&c))?;
        c = sol.coefficients;
        p = sol.dual;
        out.push(BregmanIterate {
            mu: SparseMeasure {
                coefficients: c.clone(),
            },
            p: DualVariable {
                values: p.clone(),
                time: k as f64 * lambda,
            },
            loss: problem.loss(&c),
        });
    }
    Ok(out)
}

/// Bregman iterates as a trajectory with `t_k = k lambda`, preceded by the zero start.
pub fn iterates_to_trajectory(problem: &Problem, iterates: &[BregmanIterate]) -> FlowTrajectory {
    let n = problem.n_atoms();
    let v = problem.atoms().weights();
    let mut breakpoints = vec![make_breakpoint(
        problem,
        0.0,
        &vec![0.0; n],
        &vec![0.0; n],
        Vec::new(),
        Event::Start,
    )];
    for it in iterates {
        let active = (0..n)
            .filter(|&k| it.p.values[k].abs() >= v[k] - 1e-9)
            .collect();
        breakpoints.push(make_breakpoint(
            problem,
            it.p.time,
            &it.mu.coefficients,
            &it.p.values,
            active,
            Event::Sample,
        ));
    }
    FlowTrajectory {
        breakpoints,
        termination: Termination::Horizon,
        warnings: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{dual_feasibility, Atom, AtomSet, WeightVariant};
    use crate::operator::{Activation, Dataset};

    fn problem(targets: Vec<f64>) -> Problem {
        let ds = Dataset::new(
            vec![vec![-1.0], vec![0.0], vec![1.0], vec![2.0]],
            targets,
            None,
        )
        .unwrap();
        let atoms = AtomSet::with_bounding_box(
            vec![
                Atom::new(vec![1.0], 0.5),
                Atom::new(vec![-1.0], 0.25),
                Atom::new(vec![0.5], -1.0),
            ],
            WeightVariant::WithConstant,
        )
        .unwrap();
        Problem::new(ds, atoms, Activation::relu()).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_iterates() {
        let its = solve_bregman(&problem(vec![0.0; 4]), 1.0, 3, 1e-12).unwrap();
        assert!(its
            .iter()
            .all(|it| it.mu.coefficients.iter().all(|c| *c == 0.0)));
    }

    #[test]
    fn iterates_feasible_and_loss_monotone() {
        let prob = problem(vec![1.0, -0.5, 2.0, 0.3]);
        let its = solve_bregman(&prob, 0.5, 30, 1e-11).unwrap();
        let mut prev = f64::INFINITY;
        for it in &its {
            assert!(
                dual_feasibility(&it.p, prob.atoms(), 1e-10)
                    .unwrap()
                    .feasible
            );
            assert!(it.loss <= prev + 1e-12);
            prev = it.loss;
        }
    }

    #[test]
    fn lasso_residual_small() {
        let prob = problem(vec![1.0, -0.5, 2.0, 0.3]);
        let sol = weighted_lasso(&prob, &[0.0; 3], 10.0, LassoOptions::default(), None).unwrap();
        assert!(sol.residual <= 1e-10);
    }
}
