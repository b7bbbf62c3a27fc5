//! Explicit Euler steps approach the event-driven solution as the step shrinks.

use barron_iss::*;

fn main() -> Result<()> {
    let points: Vec<Vec<f64>> = (0..25).map(|i| vec![-1.0 + i as f64 / 12.0]).collect();
    let targets = points.iter().map(|x| (2.5 * x[0]).sin()).collect();
    let data = Dataset::new(points, targets, None)?;
    let atoms: Vec<Atom> = (0..12)
        .map(|k| {
            let s = -1.0 + k as f64 / 5.5;
            Atom::new(vec![if k % 2 == 0 { 1.0 } else { -1.0 }], s)
        })
        .collect();
    let atoms = AtomSet::with_bounding_box(atoms, WeightVariant::WithConstant)?;
    let problem = Problem::new(data, atoms, Activation::relu())?;

    let exact = solve_exact_iss(&problem, 30.0, 10_000, 1e-13)?;
    println!("exact: {} breakpoints up to t = 30", exact.len());
    for step in [1e-1, 1e-2, 1e-3, 1e-4] {
        let euler = solve_euler_iss(&problem, step, 30.0)?;
        let err = (1..=30)
            .map(|k| {
                let t = k as f64;
                let (a, b) = (exact.dual_at(t), euler.dual_at(t));
                a.iter()
                    .zip(&b)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        println!("step {step:>7.0e}: max dual error {err:.3e}");
    }
    Ok(())
}
