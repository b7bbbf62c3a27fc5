//! Sparse recovery of shallow networks with minimal weighted total variation via
//! the inverse scale space flow on a finite atom set.

pub mod cli;
pub mod config;
pub mod error;
pub mod lab;
pub mod linalg;
pub mod measure;
pub mod operator;
pub mod oracle;
pub mod solver;
pub mod tessellation;

pub use error::{Error, Result};
pub use measure::{
    dual_feasibility, j_norm, subgradient_consistency, total_variation, weight_of, Atom, AtomSet,
    DomainBox, DualVariable, FeasibilityReport, SparseMeasure, WeightVariant,
};
pub use operator::{
    backproject, build_design_matrix, loss_rf, predict, Activation, ActivationKind, Dataset,
    DesignMatrix,
};
pub use solver::{
    next_event_time, signed_restricted_lsq, solve_bregman, solve_euler_iss, solve_exact_iss,
    Breakpoint, Event, FlowTrajectory, Problem, Termination,
};
