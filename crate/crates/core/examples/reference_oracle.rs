//! Minimal-norm reference solution, its source element, and a transport distance.

use barron_iss::oracle::{minimal_norm_minimizer, source_element, wasserstein1, GroundMetric};
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
    let problem = Problem::new(data.clone(), grid.atoms, Activation::relu())?;

    let reference = minimal_norm_minimizer(&problem)?;
    println!("J(mu_dagger) = {:.6}", reference.j_value);
    println!("loss = {:.3e}, rank = {}", reference.loss, reference.rank);
    println!(
        "certified = {}, ||phi|| = {:.6}",
        reference.certified, reference.phi_norm
    );

    let flow = solve_exact_iss(&problem, f64::INFINITY, 10_000, 1e-13)?;
    println!("J at the end of the flow = {:.6}", flow.last().j_norm);

    let src = source_element(&problem, &flow.last().mu)?;
    println!(
        "source element for the flow limit: satisfied = {}, norm {:.6}",
        src.satisfied, src.norm
    );

    let shifted_points: Vec<Vec<f64>> = data.points().iter().map(|x| vec![x[0] + 0.05]).collect();
    let shifted = data.with_points(shifted_points)?;
    println!(
        "W1 after a shift by 0.05: {:.6}",
        wasserstein1(&data, &shifted, GroundMetric::L2)?
    );
    Ok(())
}
