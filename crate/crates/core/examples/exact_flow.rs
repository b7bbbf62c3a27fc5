//! Exact inverse scale space flow on the bundled 1D toy data with grid atoms.

use barron_iss::tessellation::{build_level, Construction};
use barron_iss::*;

fn main() -> Result<()> {
    let data = Dataset::from_csv(concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy1d.csv"))?;
    let domain = DomainBox::symmetric(2, 1.0)?;
    let grid = build_level(
        &domain,
        Construction::NestedGrid,
        2,
        WeightVariant::WithConstant,
    )?;
    let problem = Problem::new(data, grid.atoms.clone(), Activation::relu())?;

    let traj = solve_exact_iss(&problem, f64::INFINITY, 10_000, 1e-13)?;
    println!("{:>12} {:>14} {:>10}  event", "t", "loss", "J");
    for b in &traj.breakpoints {
        println!(
            "{:>12.5} {:>14.6e} {:>10.5}  {}",
            b.t, b.loss, b.j_norm, b.event
        );
    }
    println!("termination: {:?}", traj.termination);

    let last = traj.last();
    for k in last.mu.support() {
        let atom = problem.atoms().atom(k);
        println!(
            "atom a={:?} b={:+.3} mass {:+.6}",
            atom.a, atom.b, last.mu.coefficients[k]
        );
    }
    Ok(())
}
