use super::restricted::solve_signed;
use super::{make_breakpoint, max_abs, Event, FlowTrajectory, Problem, Termination};
use crate::error::{Error, Result};

/// Settings for [`solve_euler_iss_with`].
#[derive(Debug, Clone, Copy)]
pub struct EulerOptions {
    /// Record every `stride`-th step; steps where the active set changes and
    /// the final step are always recorded. `0` picks a stride giving about 1000 rows.
    pub stride: usize,
    /// Stationarity threshold on `max |g|`, relative to `max(1, max |g_0|)`.
    pub tol: f64,
}

impl Default for EulerOptions {
    fn default() -> Self {
        EulerOptions {
            stride: 0,
            tol: 1e-10,
        }
    }
}

/// Explicit Euler steps `p_{k+1} = p_k + step * L_rho(f - K mu_k)`.
pub fn solve_euler_iss(problem: &Problem, step: f64, horizon: f64) -> Result<FlowTrajectory> {
    solve_euler_iss_with(problem, step, horizon, EulerOptions::default())
}

pub fn solve_euler_iss_with(
    problem: &Problem,
    step: f64,
    horizon: f64,
    opts: EulerOptions,
) -> Result<FlowTrajectory> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidInput("euler step must be positive".into()));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput(
            "euler horizon must be finite and nonnegative".into(),
        ));
    }
    let steps = (horizon / step).round() as usize;
    let stride = if opts.stride == 0 {
        (steps / 1000).max(1)
    } else {
        opts.stride
    };
    let n = problem.n_atoms();
    let v = problem.atoms().weights().to_vec();
    let mut p = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut g = problem.dual_velocity(&c);
    let stat_tol = opts.tol * max_abs(&g).max(1.0);
    let mut face: Vec<(usize, f64)> = Vec::new();
    let mut breakpoints = vec![make_breakpoint(
        problem,
        0.0,
        &c,
        &p,
        Vec::new(),
        Event::Start,
    )];
    if max_abs(&g) <= stat_tol {
        breakpoints[0].event = Event::Stationary;
        return Ok(FlowTrajectory {
            breakpoints,
            termination: Termination::Stationary,
            warnings: Vec::new(),
        });
    }
    let mut warnings = Vec::new();

    for k in 1..=steps {
        for j in 0..n {
            p[j] += step * g[j];
        }
        let t = k as f64 * step;
        let new_face: Vec<(usize, f64)> = (0..n)
            .filter(|&j| p[j].abs() >= v[j])
            .map(|j| (j, p[j].signum()))
            .collect();
        let changed = new_face != face;
        if changed {
            let entered: Vec<usize> = new_face
                .iter()
                .filter(|(j, _)| !face.iter().any(|(i, _)| i == j))
                .map(|(j, _)| *j)
                .collect();
            let idx: Vec<usize> = new_face.iter().map(|(j, _)| *j).collect();
            let signs: Vec<f64> = new_face.iter().map(|(_, s)| *s).collect();
            let warm: Vec<usize> = (0..n).filter(|&j| c[j] != 0.0).collect();
            let fit = solve_signed(problem, &idx, &signs, &warm)?;
            if fit.rank_deficient && warnings.is_empty() {
                warnings.push(format!("rank-deficient active set at t = {t}"));
            }
            c = fit.measure.coefficients;
            g = fit.velocity;
            face = new_face;
            let stationary = max_abs(&g) <= stat_tol;
            let event = if stationary {
                Event::Stationary
            } else {
                Event::Entry(entered)
            };
            breakpoints.push(make_breakpoint(
                problem,
                t,
                &c,
                &p,
                face.iter().map(|x| x.0).collect(),
                event,
            ));
            if stationary {
                return Ok(FlowTrajectory {
                    breakpoints,
                    termination: Termination::Stationary,
                    warnings,
                });
            }
        } else if k % stride == 0 || k == steps {
            let event = if k == steps {
                Event::HorizonReached
            } else {
                Event::Sample
            };
            breakpoints.push(make_breakpoint(
                problem,
                t,
                &c,
                &p,
                face.iter().map(|x| x.0).collect(),
                event,
            ));
        }
    }
    if let Some(last) = breakpoints.last_mut() {
        if last.t > 0.0 {
            last.event = Event::HorizonReached;
        }
    }
    Ok(FlowTrajectory {
        breakpoints,
        termination: Termination::Horizon,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Atom, AtomSet, WeightVariant};
    use crate::operator::{Activation, Dataset};

    fn problem(targets: Vec<f64>) -> Problem {
        let ds = Dataset::new(vec![vec![-1.0], vec![0.0], vec![1.0]], targets, None).unwrap();
        let atoms = AtomSet::with_bounding_box(
            vec![Atom::new(vec![1.0], 0.5), Atom::new(vec![-1.0], 0.25)],
            WeightVariant::WithConstant,
        )
        .unwrap();
        Problem::new(ds, atoms, Activation::relu()).unwrap()
    }

    #[test]
    fn zero_data_stays_zero() {
        let traj = solve_euler_iss(&problem(vec![0.0; 3]), 0.1, 1.0).unwrap();
        assert!(traj
            .breakpoints
            .iter()
            .all(|b| b.mu.coefficients.iter().all(|c| *c == 0.0)));
    }

    #[test]
    fn first_step_is_scaled_backprojection() {
        let prob = problem(vec![1.0, 2.0, -1.0]);
        let traj = solve_euler_iss_with(
            &prob,
            0.01,
            0.01,
            EulerOptions {
                stride: 1,
                tol: 1e-12,
            },
        )
        .unwrap();
        let g0 = prob.dual_velocity(&[0.0, 0.0]);
        let p1 = &traj.breakpoints[1].p.values;
        for k in 0..2 {
            assert!((p1[k] - 0.01 * g0[k]).abs() < 1e-15);
        }
    }
}
