use nalgebra::DMatrix;

use super::scaled_system;
use crate::error::{check_len, Error, Result};
use crate::linalg::least_squares;
use crate::solver::{make_breakpoint, Event, FlowTrajectory, Problem, Termination};

/// Largest face handled by [`cone_lsq_enumerate`].
const MAX_FACE: usize = 16;

/// Minimizes the loss over measures on `face` whose coefficients have the
/// signs `signs[atom]` (or vanish) by trying every sub-support. `signs` is
/// indexed by atom, not by position in `face`.
pub fn cone_lsq_enumerate(problem: &Problem, face: &[usize], signs: &[f64]) -> Result<Vec<f64>> {
    if face.len() > MAX_FACE {
        return Err(Error::InvalidInput(format!(
            "face of size {} exceeds the enumeration limit {MAX_FACE}",
            face.len()
        )));
    }
    check_len("cone_lsq_enumerate signs", problem.n_atoms(), signs.len())?;
    let (b, y, _) = scaled_system(problem);
    let n = problem.n_atoms();
    let mut best = vec![0.0; n];
    let mut best_obj = y.norm_squared();
    for mask in 1u32..(1u32 << face.len()) {
        let cols: Vec<usize> = (0..face.len()).filter(|k| mask & (1 << k) != 0).collect();
        let sub = DMatrix::from_fn(b.nrows(), cols.len(), |i, k| b[(i, face[cols[k]])]);
        let x = least_squares(&sub, &y).x;
        if cols
            .iter()
            .enumerate()
            .any(|(k, &f)| x[k] * signs[face[f]] < 0.0)
        {
            continue;
        }
        let obj = (&y - &sub * &x).norm_squared();
        if obj < best_obj * (1.0 - 1e-13) {
            best_obj = obj;
            best = vec![0.0; n];
            for (k, &f) in cols.iter().enumerate() {
                best[face[f]] = x[k];
            }
        }
    }
    Ok(best)
}

/// Projected explicit Euler integration of the flow, clamping `p` to `[-V, V]`
/// after each step. Meant as a test oracle on tiny instances.
pub fn brute_force_flow(problem: &Problem, step: f64, horizon: f64) -> Result<FlowTrajectory> {
    brute_force_flow_with(problem, step, horizon, 0)
}

/// As [`brute_force_flow`], recording every `stride`-th step (`0` = only
/// face changes and the final step).
pub fn brute_force_flow_with(
    problem: &Problem,
    step: f64,
    horizon: f64,
    stride: usize,
) -> Result<FlowTrajectory> {
    if !(step > 0.0) || !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput(
            "brute force flow needs step > 0 and a finite horizon".into(),
        ));
    }
    let n = problem.n_atoms();
    let v = problem.atoms().weights().to_vec();
    let steps = (horizon / step).round() as usize;
    let mut p = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut g = problem.dual_velocity(&c);
    let mut face: Vec<usize> = Vec::new();
    let mut face_signs = vec![0.0; n];
    let mut breakpoints = vec![make_breakpoint(
        problem,
        0.0,
        &c,
        &p,
        Vec::new(),
        Event::Start,
    )];
    for k in 1..=steps {
        for j in 0..n {
            p[j] = (p[j] + step * g[j]).clamp(-v[j], v[j]);
        }
        let new_face: Vec<usize> = (0..n).filter(|&j| p[j].abs() >= v[j]).collect();
        let new_signs: Vec<f64> = (0..n)
            .map(|j| {
                if p[j].abs() >= v[j] {
                    p[j].signum()
                } else {
                    0.0
                }
            })
            .collect();
        let t = k as f64 * step;
        if new_face != face || new_signs != face_signs {
            let entered: Vec<usize> = new_face
                .iter()
                .copied()
                .filter(|j| !face.contains(j))
                .collect();
            c = cone_lsq_enumerate(problem, &new_face, &new_signs)?;
            g = problem.dual_velocity(&c);
            face = new_face;
            face_signs = new_signs;
            breakpoints.push(make_breakpoint(
                problem,
                t,
                &c,
                &p,
                face.clone(),
                Event::Entry(entered),
            ));
        } else if k == steps || (stride > 0 && k % stride == 0) {
            breakpoints.push(make_breakpoint(
                problem,
                t,
                &c,
                &p,
                face.clone(),
                Event::Sample,
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
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Atom, AtomSet, WeightVariant};
    use crate::operator::{Activation, Dataset};

    #[test]
    fn zero_data_zero_trajectory() {
        let ds = Dataset::new(vec![vec![0.0], vec![1.0]], vec![0.0, 0.0], None).unwrap();
        let atoms = AtomSet::with_bounding_box(
            vec![Atom::new(vec![1.0], 0.0)],
            WeightVariant::WithConstant,
        )
        .unwrap();
        let prob = Problem::new(ds, atoms, Activation::relu()).unwrap();
        let traj = brute_force_flow(&prob, 1e-3, 1.0).unwrap();
        assert!(traj
            .breakpoints
            .iter()
            .all(|b| b.p.values[0] == 0.0 && b.mu.coefficients[0] == 0.0));
    }

    #[test]
    fn single_atom_entry_time_within_one_step() {
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
        let t1 = 2.5 / g0;
        let step = 1e-4;
        let traj = brute_force_flow(&prob, step, 2.0 * t1).unwrap();
        let entry = traj
            .breakpoints
            .iter()
            .find(|b| !b.active.is_empty())
            .unwrap();
        assert!(entry.t >= t1 - 1e-12 && entry.t <= t1 + step + 1e-12);
    }

    #[test]
    fn cone_respects_signs_by_atom() {
        // the target is the difference of two columns; forcing both positive rules that out
        let ds = Dataset::new(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![0.0, 0.0, 0.0],
            None,
        )
        .unwrap();
        let atoms = AtomSet::with_bounding_box(
            vec![
                Atom::new(vec![0.0], 1.0),
                Atom::new(vec![1.0], 0.0),
                Atom::new(vec![1.0], 1.0),
            ],
            WeightVariant::WithConstant,
        )
        .unwrap();
        let prob = Problem::new(ds, atoms, Activation::relu()).unwrap();
        let f = prob.predict(&[0.0, 1.0, -1.0]);
        let prob = prob
            .with_dataset(prob.dataset().with_targets(f).unwrap())
            .unwrap();
        let free = cone_lsq_enumerate(&prob, &[1, 2], &[0.0, 1.0, -1.0]).unwrap();
        assert!((free[1] - 1.0).abs() < 1e-12 && (free[2] + 1.0).abs() < 1e-12);
        let forced = cone_lsq_enumerate(&prob, &[1, 2], &[0.0, 1.0, 1.0]).unwrap();
        assert!(forced[1] >= 0.0 && forced[2] >= 0.0);
    }
}
