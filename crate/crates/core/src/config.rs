//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lab::PerturbationSpec;
use crate::measure::{Atom, AtomSet, DomainBox, WeightVariant};
use crate::operator::{Activation, ActivationKind};
use crate::tessellation::{build_level, Construction, Tessellation};

/// Where the atoms come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AtomSource {
    /// One level of a tessellation of `[-radius, radius]^(d+1)`.
    Grid {
        construction: Construction,
        level: usize,
        #[serde(default = "unit")]
        radius: f64,
    },
    /// `a_1,...,a_d,b` rows.
    Csv { path: PathBuf },
    /// `count` uniform atoms in `[-radius, radius]^(d+1)`.
    Random {
        count: usize,
        #[serde(default = "unit")]
        radius: f64,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverSpec {
    Exact,
    Euler { step: f64 },
    Bregman { lambda: f64, iters: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative stationarity threshold of the exact flow.
    pub stationarity: f64,
    /// Allowed `|p| - V` and subgradient mismatch.
    pub feasibility: f64,
    /// Inner tolerance of Bregman and lasso solves.
    pub inner: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            stationarity: 1e-13,
            feasibility: 1e-9,
            inner: 1e-10,
        }
    }
}

/// Settings of the `discretize` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizeSpec {
    pub construction: Construction,
    pub levels: usize,
    #[serde(default = "unit")]
    pub lambda: f64,
    #[serde(default = "unit")]
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset_path: PathBuf,
    pub atoms: AtomSource,
    #[serde(default = "default_activation")]
    pub activation: ActivationKind,
    /// Overrides the Lipschitz constant of the activation in bounds.
    #[serde(default)]
    pub lipschitz: Option<f64>,
    #[serde(default)]
    pub weight_variant: WeightVariant,
    #[serde(default = "default_solver")]
    pub solver: SolverSpec,
    /// `null` or absent runs to stationarity.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default = "default_max_events")]
    pub max_events: usize,
    #[serde(default)]
    pub perturbation: Option<PerturbationSpec>,
    /// Bound tags: `ideal_loss`, `ideal_bregman`, `noise`, `bias_general`,
    /// `bias_radon`, `bias_sampling`, `bias_wasserstein`, `discretization`.
    #[serde(default)]
    pub reports: Vec<String>,
    #[serde(default)]
    pub discretize: Option<DiscretizeSpec>,
    /// Probability level of the sampling bound.
    #[serde(default = "default_delta_prob")]
    pub delta_prob: f64,
    /// Discrepancy principle factor; absent disables early stopping.
    #[serde(default)]
    pub discrepancy_tau: Option<f64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_activation() -> ActivationKind {
    ActivationKind::Relu
}

fn default_solver() -> SolverSpec {
    SolverSpec::Exact
}

fn default_max_events() -> usize {
    10_000
}

fn default_delta_prob() -> f64 {
    0.1
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

pub const REPORT_TAGS: [&str; 8] = [
    "ideal_loss",
    "ideal_bregman",
    "noise",
    "bias_general",
    "bias_radon",
    "bias_sampling",
    "bias_wasserstein",
    "discretization",
];

fn invalid(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    /// Parses the file and resolves relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.dataset_path = base.join(&cfg.dataset_path);
        if let AtomSource::Csv { path } = &mut cfg.atoms {
            *path = base.join(&*path);
        }
        cfg.output_dir = base.join(&cfg.output_dir);
        Ok(cfg)
    }

    /// Range checks that need no data. File existence is checked by the runner.
    pub fn validate(&self) -> Result<()> {
        match self.atoms {
            AtomSource::Grid { radius, .. } | AtomSource::Random { radius, .. }
                if !(radius > 0.0 && radius.is_finite()) =>
            {
                return Err(invalid(
                    "atoms.radius",
                    format!("must be positive, got {radius}"),
                ));
            }
            AtomSource::Random { count: 0, .. } => {
                return Err(invalid("atoms.count", "must be at least 1"))
            }
            _ => {}
        }
        if self.activation == ActivationKind::Custom {
            return Err(invalid(
                "activation",
                "custom activations are only available through the library",
            ));
        }
        if let Some(l) = self.lipschitz {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(invalid(
                    "lipschitz",
                    format!("must be nonnegative, got {l}"),
                ));
            }
        }
        match self.solver {
            SolverSpec::Euler { step } if !(step > 0.0 && step.is_finite()) => {
                return Err(invalid(
                    "solver.step",
                    format!("must be positive, got {step}"),
                ));
            }
            SolverSpec::Bregman { lambda, .. } if !(lambda > 0.0 && lambda.is_finite()) => {
                return Err(invalid(
                    "solver.lambda",
                    format!("must be positive, got {lambda}"),
                ));
            }
            SolverSpec::Bregman { iters: 0, .. } => {
                return Err(invalid("solver.iters", "must be at least 1"))
            }
            _ => {}
        }
        if let Some(h) = self.horizon {
            if !(h >= 0.0) {
                return Err(invalid("horizon", format!("must be nonnegative, got {h}")));
            }
        }
        if matches!(self.solver, SolverSpec::Euler { .. })
            && !self.horizon.is_some_and(f64::is_finite)
        {
            return Err(invalid(
                "horizon",
                "the euler solver needs a finite horizon",
            ));
        }
        if self.max_events == 0 {
            return Err(invalid("max_events", "must be at least 1"));
        }
        if let Some(p) = &self.perturbation {
            // the sample count is checked again once the data is loaded
            p.validate(usize::MAX)?;
        }
        for tag in &self.reports {
            if !REPORT_TAGS.contains(&tag.as_str()) {
                return Err(invalid("reports", format!("unknown tag {tag:?}")));
            }
        }
        if let Some(d) = &self.discretize {
            if d.levels == 0 {
                return Err(invalid("discretize.levels", "must be at least 1"));
            }
            if !(d.lambda > 0.0 && d.lambda.is_finite()) {
                return Err(invalid(
                    "discretize.lambda",
                    format!("must be positive, got {}", d.lambda),
                ));
            }
            if !(d.radius > 0.0 && d.radius.is_finite()) {
                return Err(invalid(
                    "discretize.radius",
                    format!("must be positive, got {}", d.radius),
                ));
            }
        }
        if !(self.delta_prob > 0.0 && self.delta_prob < 1.0) {
            return Err(invalid(
                "delta_prob",
                format!("must lie in (0, 1), got {}", self.delta_prob),
            ));
        }
        if let Some(tau) = self.discrepancy_tau {
            if !(tau >= 1.0) {
                return Err(invalid(
                    "discrepancy_tau",
                    format!("must be at least 1, got {tau}"),
                ));
            }
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.stationarity", t.stationarity),
            ("tolerances.feasibility", t.feasibility),
            ("tolerances.inner", t.inner),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn activation(&self) -> Result<Activation> {
        let act = Activation::from_kind(self.activation)?;
        match self.lipschitz {
            Some(l) if l != act.lipschitz_constant() => {
                let kind = self.activation;
                Activation::custom(
                    move |s| Activation::from_kind(kind).expect("builtin").eval(s),
                    l,
                )
            }
            _ => Ok(act),
        }
    }

    /// Builds the atom set for data of input dimension `d`. Grid sources also
    /// return their tessellation.
    pub fn build_atoms(&self, d: usize) -> Result<(AtomSet, Option<Tessellation>)> {
        match &self.atoms {
            AtomSource::Grid {
                construction,
                level,
                radius,
            } => {
                let dom = DomainBox::symmetric(d + 1, *radius)?;
                let t = build_level(&dom, *construction, *level, self.weight_variant)?;
                Ok((t.atoms.clone(), Some(t)))
            }
            AtomSource::Csv { path } => {
                let set = AtomSet::from_csv(path, self.weight_variant)?;
                if set.dim() != d {
                    return Err(invalid(
                        "atoms.path",
                        format!(
                            "atoms have input dimension {} but the data has {d}",
                            set.dim()
                        ),
                    ));
                }
                Ok((set, None))
            }
            AtomSource::Random { count, radius } => {
                use rand::{Rng, SeedableRng};
                let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
                let atoms = (0..*count)
                    .map(|_| {
                        let coords: Vec<f64> = (0..=d)
                            .map(|_| r.random_range(-*radius..=*radius))
                            .collect();
                        Atom::from_coordinates(&coords)
                    })
                    .collect();
                let set = AtomSet::new(
                    atoms,
                    self.weight_variant,
                    DomainBox::symmetric(d + 1, *radius)?,
                )?;
                Ok((set, None))
            }
        }
    }
}
