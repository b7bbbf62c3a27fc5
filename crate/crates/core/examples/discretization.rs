//! Grid refinement of the atom set: the discretization bound along coarse
//! flows, and convergence of the penalized minima over nested grids.

use barron_iss::tessellation::{
    build_level, build_refinement, discretization_bound_report, gamma_convergence_experiment,
    Construction,
};
use barron_iss::*;

fn main() -> Result<()> {
    let points: Vec<Vec<f64>> = (0..=16).map(|k| vec![-1.0 + k as f64 / 8.0]).collect();
    let targets = points.iter().map(|x| (3.0 * x[0]).sin()).collect();
    let data = Dataset::new(points, targets, None)?;
    let domain = DomainBox::symmetric(2, 1.0)?;

    let fine_grid = build_level(
        &domain,
        Construction::RegularGrid,
        5,
        WeightVariant::WithConstant,
    )?;
    let fine = Problem::new(data.clone(), fine_grid.atoms, Activation::relu())?;
    let mu_ref = solve_exact_iss(&fine, f64::INFINITY, 100_000, 1e-13)?
        .last()
        .mu
        .clone();
    for level in 1..=3 {
        let grid = build_level(
            &domain,
            Construction::RegularGrid,
            level,
            WeightVariant::WithConstant,
        )?;
        let coarse = Problem::new(data.clone(), grid.atoms.clone(), Activation::relu())?;
        let traj = solve_exact_iss(&coarse, f64::INFINITY, 100_000, 1e-13)?;
        let rep = discretization_bound_report(&traj, &coarse, &grid, &fine, &mu_ref, None)?;
        println!(
            "level {level}: {:>3} atoms, max diameter {:.4}, final loss {:.3e}, min slack {:.3e}",
            grid.len(),
            grid.max_diameter(),
            traj.last().loss,
            rep.min_slack()
        );
    }

    let seq = build_refinement(
        &domain,
        Construction::NestedGrid,
        4,
        WeightVariant::WithConstant,
    )?;
    let exp = gamma_convergence_experiment(&data, &Activation::relu(), &seq, 100.0)?;
    println!("{:>5} {:>9} {:>14}", "N", "maxdiam", "F_min");
    for row in &exp.rows {
        println!(
            "{:>5} {:>9.4} {:>14.10}",
            row.n, row.max_diameter, row.f_min
        );
    }
    println!(
        "monotone: {}, last gap {:.2e}",
        exp.monotone(1e-9),
        exp.cauchy_gap
    );
    Ok(())
}
