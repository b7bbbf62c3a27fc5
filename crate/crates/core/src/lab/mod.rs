//! Data perturbations and the bounds that compare perturbed flows with the clean reference.

mod bounds;
mod perturb;

pub use bounds::{
    bias_bound_report, bregman_distance, c01_norm_estimate, chebyshev_radius, discrepancy_stop,
    discrepancy_stop_with_offset, distance_to_reference, ideal_bregman_report, ideal_loss_report,
    l4_norm_sq, lipschitz_estimate, noise_bound_report, noise_bound_rhs, noise_optimal_time,
    pairwise_double_integral, report_times, signed_norm_sq, BiasVariant, BoundReport,
    DiscrepancyStop, NoiseBoundReport,
};
pub use perturb::{
    add_measurement_noise, monte_carlo_subsample, monte_carlo_subsample_indices,
    radon_nikodym_reweight, wasserstein_shift, PerturbationKind, PerturbationSpec,
};
