//! Noisy targets: the flow first approaches the clean solution, then fits the
//! noise. The discrepancy principle stops near the best time.

use barron_iss::lab::{
    add_measurement_noise, discrepancy_stop, distance_to_reference, noise_bound_report,
};
use barron_iss::oracle::minimal_norm_minimizer;
use barron_iss::tessellation::{build_level, Construction};
use barron_iss::*;

fn main() -> Result<()> {
    let data = Dataset::from_csv(concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy1d.csv"))?;
    let domain = DomainBox::symmetric(2, 1.0)?;
    let grid = build_level(
        &domain,
        Construction::NestedGrid,
        3,
        WeightVariant::WithConstant,
    )?;
    let clean = Problem::new(data.clone(), grid.atoms, Activation::relu())?;
    let reference = minimal_norm_minimizer(&clean)?;
    println!("clean reference certified: {}", reference.certified);

    for delta in [1e-1, 1e-2] {
        let noisy = clean.with_dataset(add_measurement_noise(&data, delta, 1)?)?;
        let traj = solve_exact_iss(&noisy, f64::INFINITY, 100_000, 1e-13)?;
        let dist = distance_to_reference(&traj, &clean, &reference.mu_dagger);
        let (best, dmin) =
            dist.iter().enumerate().fold(
                (0, f64::INFINITY),
                |acc, (i, &d)| if d < acc.1 { (i, d) } else { acc },
            );
        let stop = discrepancy_stop(&traj, delta, 1.5)?;
        let rep = noise_bound_report(&traj, &reference, clean.atoms(), delta)?;
        println!("delta {delta:e}");
        println!(
            "  closest to the clean fit at t = {:.3} (distance {dmin:.3e}); final distance {:.3e}",
            traj.breakpoints[best].t,
            dist.last().unwrap()
        );
        println!(
            "  discrepancy stop at t = {:.3} (reached = {})",
            stop.time, stop.reached
        );
        println!(
            "  bound minimizing time {:.3}, min slack {:.3e}",
            rep.optimal_time,
            rep.report.min_slack()
        );
    }
    Ok(())
}
