use super::restricted::solve_signed;
use super::{make_breakpoint, max_abs, Event, FlowTrajectory, Problem, Termination};
use crate::error::{Error, Result};

/// Earliest time at which an inactive dual coordinate reaches `|p_n| = V_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct NextEvent {
    /// Time step until the event; infinite when no coordinate can become tight.
    pub step: f64,
    /// All atoms reaching the boundary within the relative tie tolerance.
    pub entering: Vec<usize>,
}

/// For inactive `n` with `g_n != 0` the hitting time is
/// `(V_n - sign(g_n) p_n) / |g_n|`; ties within `rel_tol` enter together.
pub fn next_event_time(
    p: &[f64],
    g: &[f64],
    v: &[f64],
    active: &[usize],
    rel_tol: f64,
) -> NextEvent {
    let mut is_active = vec![false; p.len()];
    for &k in active {
        is_active[k] = true;
    }
    let times: Vec<f64> = (0..p.len())
        .map(|n| {
            if is_active[n] || g[n] == 0.0 {
                f64::INFINITY
            } else {
                ((v[n] - g[n].signum() * p[n]) / g[n].abs()).max(0.0)
            }
        })
        .collect();
    let step = times.iter().copied().fold(f64::INFINITY, f64::min);
    if !step.is_finite() {
        return NextEvent {
            step,
            entering: Vec::new(),
        };
    }
    let cutoff = step + rel_tol * step.max(f64::MIN_POSITIVE);
    let entering = (0..p.len()).filter(|&n| times[n] <= cutoff).collect();
    NextEvent { step, entering }
}

/// Settings for [`solve_exact_iss_with`].
#[derive(Debug, Clone, Copy)]
pub struct ExactOptions {
    /// Final time; `f64::INFINITY` runs until stationarity.
    pub horizon: f64,
    pub max_events: usize,
    /// Stationarity threshold on `max |g|`, relative to `max(1, max |g_0|)`.
    pub tol: f64,
    /// Relative tolerance for simultaneous entries.
    pub event_rtol: f64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            horizon: f64::INFINITY,
            max_events: 10_000,
            tol: 1e-13,
            event_rtol: 1e-12,
        }
    }
}

/// Integrates the flow exactly from `p_0 = 0`, `mu_0 = 0`.
pub fn solve_exact_iss(
    problem: &Problem,
    horizon: f64,
    max_events: usize,
    tol: f64,
) -> Result<FlowTrajectory> {
    solve_exact_iss_with(
        problem,
        ExactOptions {
            horizon,
            max_events,
            tol,
            ..ExactOptions::default()
        },
    )
}

pub fn solve_exact_iss_with(problem: &Problem, opts: ExactOptions) -> Result<FlowTrajectory> {
    if !(opts.horizon > 0.0) && opts.max_events == 0 {
        return Err(Error::InvalidInput(
            "need a positive horizon or at least one event".into(),
        ));
    }
    if !(opts.tol >= 0.0) {
        return Err(Error::InvalidInput("tolerance must be nonnegative".into()));
    }
    let n = problem.n_atoms();
    let v = problem.atoms().weights().to_vec();
    let mut c = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut g = problem.dual_velocity(&c);
    let stat_tol = opts.tol * max_abs(&g).max(1.0);

    // 0 = never active, otherwise the face the atom last entered on
    let mut last_sign = vec![0.0f64; n];
    let mut sign = vec![0.0f64; n];
    let mut active: Vec<usize> = Vec::new();
    let mut t = 0.0;
    let mut warnings = Vec::new();

    if max_abs(&g) <= stat_tol {
        return Ok(FlowTrajectory {
            breakpoints: vec![make_breakpoint(
                problem,
                0.0,
                &c,
                &p,
                Vec::new(),
                Event::Stationary,
            )],
            termination: Termination::Stationary,
            warnings,
        });
    }
    let mut breakpoints = vec![make_breakpoint(
        problem,
        0.0,
        &c,
        &p,
        Vec::new(),
        Event::Start,
    )];
    let mut events = 0usize;

    loop {
        if events >= opts.max_events {
            return Ok(FlowTrajectory {
                breakpoints,
                termination: Termination::MaxEvents,
                warnings,
            });
        }
        let next = next_event_time(&p, &g, &v, &active, opts.event_rtol);
        if opts.horizon.is_finite() && t + next.step >= opts.horizon {
            let s = opts.horizon - t;
            advance(&mut p, &g, s, &active, &sign, &v);
            t = opts.horizon;
            breakpoints.push(make_breakpoint(
                problem,
                t,
                &c,
                &p,
                active.clone(),
                Event::HorizonReached,
            ));
            return Ok(FlowTrajectory {
                breakpoints,
                termination: Termination::Horizon,
                warnings,
            });
        }
        if !next.step.is_finite() {
            warnings.push(format!(
                "no further events at t = {t} although max |g| = {:e}",
                max_abs(&g)
            ));
            return Ok(FlowTrajectory {
                breakpoints,
                termination: Termination::NoFurtherEvents,
                warnings,
            });
        }

        advance(&mut p, &g, next.step, &active, &sign, &v);
        t += next.step;
        if !t.is_finite() {
            return Err(Error::NonFinite(format!(
                "event time after {events} events"
            )));
        }
        events += 1;

        let mut entered = Vec::new();
        let mut flipped = Vec::new();
        for &k in &next.entering {
            let s = g[k].signum();
            p[k] = s * v[k];
            sign[k] = s;
            if last_sign[k] != 0.0 && last_sign[k] != s {
                flipped.push(k);
            } else {
                entered.push(k);
            }
            last_sign[k] = s;
            active.push(k);
        }
        active.sort_unstable();

        let signs: Vec<f64> = active.iter().map(|&k| sign[k]).collect();
        let warm: Vec<usize> = (0..n).filter(|&k| c[k] != 0.0).collect();
        let fit = solve_signed(problem, &active, &signs, &warm)?;
        if fit.rank_deficient && !warnings.iter().any(|w| w.starts_with("rank-deficient")) {
            warnings.push(format!(
                "rank-deficient active set at t = {t}; minimal-norm coefficients used"
            ));
        }
        c = fit.measure.coefficients;
        g = fit.velocity;
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("dual velocity at t = {t}")));
        }

        // zero-mass atoms whose dual turns inward leave the boundary
        active.retain(|&k| c[k] != 0.0 || sign[k] * g[k] >= 0.0);
        for k in 0..n {
            if !active.contains(&k) {
                sign[k] = 0.0;
            }
        }

        let stationary = max_abs(&g) <= stat_tol;
        let event = if stationary {
            Event::Stationary
        } else if entered.is_empty() {
            Event::SignFlip(flipped)
        } else {
            Event::Entry(entered)
        };
        breakpoints.push(make_breakpoint(problem, t, &c, &p, active.clone(), event));
        if stationary {
            return Ok(FlowTrajectory {
                breakpoints,
                termination: Termination::Stationary,
                warnings,
            });
        }
    }
}

// active coordinates are frozen on their face; inactive ones move linearly
fn advance(p: &mut [f64], g: &[f64], s: f64, active: &[usize], sign: &[f64], v: &[f64]) {
    for k in 0..p.len() {
        p[k] += s * g[k];
    }
    for &k in active {
        p[k] = sign[k] * v[k];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{dual_feasibility, subgradient_consistency, Atom, AtomSet, WeightVariant};
    use crate::operator::{Activation, Dataset};

    #[test]
    fn next_event_simple() {
        let e = next_event_time(&[0.0, 0.0], &[2.0, 0.5], &[1.0, 1.0], &[], 1e-12);
        assert_eq!(e.step, 0.5);
        assert_eq!(e.entering, vec![0]);
        let e = next_event_time(&[0.0], &[0.0], &[1.0], &[], 1e-12);
        assert!(e.step.is_infinite());
        assert!(e.entering.is_empty());
    }

    #[test]
    fn next_event_ties_and_negative_direction() {
        let e = next_event_time(
            &[0.5, 0.0, 0.0],
            &[-3.0, 2.0, 2.0 * (1.0 + 1e-13)],
            &[1.0, 1.0, 1.0],
            &[],
            1e-12,
        );
        assert!((e.step - 0.5).abs() < 1e-12);
        assert_eq!(e.entering, vec![0, 1, 2]);
        let e = next_event_time(&[0.5, 0.0], &[-3.0, 1.0], &[1.0, 1.0], &[0], 1e-12);
        assert_eq!(e.step, 1.0);
        assert_eq!(e.entering, vec![1]);
    }

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
    fn zero_data_is_stationary_at_start() {
        let traj = solve_exact_iss(&problem(vec![0.0; 4]), f64::INFINITY, 100, 1e-12).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.breakpoints[0].event, Event::Stationary);
        assert_eq!(traj.breakpoints[0].t, 0.0);
    }

    #[test]
    fn single_atom_enters_at_predicted_time() {
        let ds = Dataset::new(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![0.5, 1.0, 3.0],
            None,
        )
        .unwrap();
        let atoms = AtomSet::with_bounding_box(
            vec![Atom::new(vec![1.0], 0.5)],
            WeightVariant::WithConstant,
        )
        .unwrap();
        let prob = Problem::new(ds, atoms, Activation::relu()).unwrap();
        let g0 = prob.dual_velocity(&[0.0])[0];
        let traj = solve_exact_iss(&prob, f64::INFINITY, 10, 1e-12).unwrap();
        assert_eq!(traj.len(), 2);
        let t1 = traj.breakpoints[1].t;
        assert!((t1 - 2.5 / g0.abs()).abs() < 1e-14 * t1);
        assert_eq!(traj.termination, Termination::Stationary);
        assert!(prob.dual_velocity(&traj.last().mu.coefficients)[0].abs() < 1e-13);
    }

    #[test]
    fn first_entry_is_argmax_ratio() {
        let prob = problem(vec![1.0, -0.5, 2.0, 0.3]);
        let g0 = prob.dual_velocity(&[0.0; 3]);
        let v = prob.atoms().weights();
        let (best, t1) = (0..3)
            .map(|k| (k, v[k] / g0[k].abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let traj = solve_exact_iss(&prob, f64::INFINITY, 100, 1e-12).unwrap();
        let bp = &traj.breakpoints[1];
        assert!((bp.t - t1).abs() < 1e-14 * t1);
        assert!(
            matches!(&bp.event, Event::Entry(ix) if ix == &vec![best])
                || bp.event == Event::Stationary
        );
    }

    #[test]
    fn breakpoints_feasible_and_consistent() {
        let prob = problem(vec![1.0, -0.5, 2.0, 0.3]);
        let traj = solve_exact_iss(&prob, f64::INFINITY, 100, 1e-12).unwrap();
        let mut prev = f64::INFINITY;
        for b in &traj.breakpoints {
            assert!(dual_feasibility(&b.p, prob.atoms(), 1e-9).unwrap().feasible);
            assert!(subgradient_consistency(&b.mu, &b.p, prob.atoms(), 1e-9).unwrap());
            assert!(b.loss <= prev + 1e-12);
            prev = b.loss;
        }
    }

    #[test]
    fn horizon_interpolates_dual() {
        let prob = problem(vec![1.0, -0.5, 2.0, 0.3]);
        let full = solve_exact_iss(&prob, f64::INFINITY, 100, 1e-12).unwrap();
        let t_mid = 0.5 * full.breakpoints[1].t;
        let cut = solve_exact_iss(&prob, t_mid, 100, 1e-12).unwrap();
        assert_eq!(cut.termination, Termination::Horizon);
        let last = cut.last();
        assert_eq!(last.event, Event::HorizonReached);
        assert_eq!(last.t, t_mid);
        let g0 = prob.dual_velocity(&[0.0; 3]);
        for k in 0..3 {
            assert!((last.p.values[k] - t_mid * g0[k]).abs() < 1e-12);
        }
    }
}
