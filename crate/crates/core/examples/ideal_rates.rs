//! Loss and Bregman distance along the flow against their 1/t bounds.

use barron_iss::lab::{ideal_bregman_report, ideal_loss_report};
use barron_iss::oracle::minimal_norm_minimizer;
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
    let problem = Problem::new(data, grid.atoms, Activation::relu())?;
    let reference = minimal_norm_minimizer(&problem)?;
    let traj = solve_exact_iss(&problem, f64::INFINITY, 10_000, 1e-13)?;

    let loss = ideal_loss_report(&traj, &reference);
    let breg = ideal_bregman_report(&traj, &reference, problem.atoms())?;
    println!("{:>10} {:>12} {:>12}", "t", "loss", "bound");
    for k in 0..loss.len() {
        println!(
            "{:>10.4} {:>12.4e} {:>12.4e}",
            loss.times[k], loss.lhs[k], loss.rhs[k]
        );
    }
    println!();
    println!("{:>10} {:>12} {:>12}", "t", "D", "||phi||^2/2t");
    for k in 0..breg.len() {
        println!(
            "{:>10.4} {:>12.4e} {:>12.4e}",
            breg.times[k], breg.lhs[k], breg.rhs[k]
        );
    }
    println!(
        "loss bound holds: {}, Bregman bound holds: {}",
        loss.holds(1e-9),
        breg.holds(1e-8)
    );
    Ok(())
}
