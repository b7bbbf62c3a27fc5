//! Bregman iterations with shrinking lambda track the continuous flow at t = k lambda.

use barron_iss::solver::iterates_to_trajectory;
use barron_iss::*;

fn main() -> Result<()> {
    let points: Vec<Vec<f64>> = (0..20).map(|i| vec![-1.0 + i as f64 / 9.5]).collect();
    let targets = points.iter().map(|x| x[0].abs() - 0.3).collect();
    let data = Dataset::new(points, targets, None)?;
    let atoms: Vec<Atom> = [
        (1.0, 0.0),
        (-1.0, 0.0),
        (1.0, -0.5),
        (-1.0, -0.5),
        (0.0, 1.0),
        (1.0, 0.5),
    ]
    .iter()
    .map(|&(a, b)| Atom::new(vec![a], b))
    .collect();
    let atoms = AtomSet::with_bounding_box(atoms, WeightVariant::WithConstant)?;
    let problem = Problem::new(data, atoms, Activation::relu())?;

    let full = solve_exact_iss(&problem, f64::INFINITY, 10_000, 1e-13)?;
    let t = 0.5 * full.last().t;
    let flow = solve_exact_iss(&problem, t, 10_000, 1e-13)?;
    let target = problem.predict(&flow.measure_at(t).coefficients);
    println!("flow at t = {t:.4}: loss {:.6e}", flow.last().loss);
    for lambda in [t / 2.0, t / 8.0, t / 32.0, t / 128.0] {
        let iters = (t / lambda).round() as usize;
        let its = solve_bregman(&problem, lambda, iters, 1e-12)?;
        let traj = iterates_to_trajectory(&problem, &its);
        let pred = problem.predict(&traj.last().mu.coefficients);
        let gap: Vec<f64> = pred.iter().zip(&target).map(|(a, b)| a - b).collect();
        println!(
            "lambda {lambda:>9.5}: {iters:>3} iterations, loss {:.6e}, ||K mu_k - K mu_t|| {:.3e}",
            traj.last().loss,
            problem.dataset().norm(&gap)
        );
    }
    Ok(())
}
