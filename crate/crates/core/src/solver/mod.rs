//! Inverse scale space solvers: exact event-driven integration, explicit Euler and Bregman iterations.

mod bregman;
mod euler;
mod exact;
mod restricted;

use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::measure::{AtomSet, DualVariable, SparseMeasure};
use crate::operator::{
    backproject, build_design_matrix, half_sq_residual, predict_coefficients, Activation, Dataset,
    DesignMatrix,
};

pub use bregman::{
    iterates_to_trajectory, solve_bregman, weighted_lasso, BregmanIterate, LassoOptions,
    LassoSolution,
};
pub use euler::{solve_euler_iss, solve_euler_iss_with, EulerOptions};
pub use exact::{next_event_time, solve_exact_iss, solve_exact_iss_with, ExactOptions, NextEvent};
pub use restricted::{signed_restricted_lsq, RestrictedLsq};

/// Data, atoms, activation and the design matrix they induce.
#[derive(Debug, Clone)]
pub struct Problem {
    dataset: Dataset,
    atoms: AtomSet,
    activation: Activation,
    design: DesignMatrix,
}

impl Problem {
    pub fn new(dataset: Dataset, atoms: AtomSet, activation: Activation) -> Result<Self> {
        let design = build_design_matrix(&dataset, &atoms, &activation)?;
        Ok(Problem {
            dataset,
            atoms,
            activation,
            design,
        })
    }

    /// Uses a precomputed design matrix; its shape must match.
    pub fn with_design(
        dataset: Dataset,
        atoms: AtomSet,
        activation: Activation,
        design: DesignMatrix,
    ) -> Result<Self> {
        check_len("design rows", dataset.len(), design.rows())?;
        check_len("design columns", atoms.len(), design.cols())?;
        Ok(Problem {
            dataset,
            atoms,
            activation,
            design,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn atoms(&self) -> &AtomSet {
        &self.atoms
    }

    pub fn activation(&self) -> &Activation {
        &self.activation
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    pub fn weight_variant(&self) -> crate::measure::WeightVariant {
        self.atoms.variant()
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn n_samples(&self) -> usize {
        self.dataset.len()
    }

    /// Same atoms and activation on a different dataset.
    pub fn with_dataset(&self, dataset: Dataset) -> Result<Self> {
        Problem::new(dataset, self.atoms.clone(), self.activation.clone())
    }

    pub fn predict(&self, c: &[f64]) -> Vec<f64> {
        predict_coefficients(c, &self.design)
    }

    /// `f - K mu`.
    pub fn residual(&self, c: &[f64]) -> Vec<f64> {
        self.predict(c)
            .iter()
            .zip(self.dataset.targets())
            .map(|(p, f)| f - p)
            .collect()
    }

    /// Dual velocity `L_rho (f - K mu)`.
    pub fn dual_velocity(&self, c: &[f64]) -> Vec<f64> {
        backproject(&self.residual(c), &self.design, self.dataset.weights())
            .expect("shapes checked at construction")
    }

    pub fn loss(&self, c: &[f64]) -> f64 {
        half_sq_residual(&self.predict(c), &self.dataset)
    }
}

/// What happened at a breakpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Event {
    Start,
    /// Atoms whose dual reached the boundary.
    Entry(Vec<usize>),
    /// Atoms that re-entered on the opposite face.
    SignFlip(Vec<usize>),
    Stationary,
    HorizonReached,
    /// Recorded step of a time-stepping scheme with no change of the face.
    Sample,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |ix: &[usize]| {
            ix.iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(";")
        };
        match self {
            Event::Start => write!(f, "start"),
            Event::Entry(ix) => write!(f, "entry:{}", join(ix)),
            Event::SignFlip(ix) => write!(f, "sign_flip:{}", join(ix)),
            Event::Stationary => write!(f, "stationary"),
            Event::HorizonReached => write!(f, "horizon_reached"),
            Event::Sample => write!(f, "sample"),
        }
    }
}

/// Why integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Stationary,
    Horizon,
    MaxEvents,
    /// No constraint can become tight and the horizon is infinite.
    NoFurtherEvents,
}

#[derive(Debug, Clone, Serialize)]
pub struct Breakpoint {
    pub t: f64,
    pub mu: SparseMeasure,
    pub p: DualVariable,
    pub loss: f64,
    pub j_norm: f64,
    /// Atoms whose dual sits on the boundary.
    pub active: Vec<usize>,
    pub event: Event,
}

/// Piecewise record of `(mu_t, p_t)`: `mu` is constant and `p` is affine between breakpoints.
#[derive(Debug, Clone, Serialize)]
pub struct FlowTrajectory {
    pub breakpoints: Vec<Breakpoint>,
    pub termination: Termination,
    pub warnings: Vec<String>,
}

impl FlowTrajectory {
    pub fn len(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.breakpoints.is_empty()
    }

    pub fn last(&self) -> &Breakpoint {
        self.breakpoints
            .last()
            .expect("trajectory has at least one breakpoint")
    }

    pub fn times(&self) -> Vec<f64> {
        self.breakpoints.iter().map(|b| b.t).collect()
    }

    fn segment(&self, t: f64) -> usize {
        match self.breakpoints.binary_search_by(|b| b.t.total_cmp(&t)) {
            Ok(k) => k,
            Err(0) => 0,
            Err(k) => k - 1,
        }
    }

    /// Measure in force at time `t` (right-continuous).
    pub fn measure_at(&self, t: f64) -> &SparseMeasure {
        &self.breakpoints[self.segment(t)].mu
    }

    /// Dual at time `t`, interpolated linearly between breakpoints and held
    /// constant after the last one.
    pub fn dual_at(&self, t: f64) -> Vec<f64> {
        let k = self.segment(t);
        let b0 = &self.breakpoints[k];
        match self.breakpoints.get(k + 1) {
            Some(b1) if t > b0.t => {
                let s = (t - b0.t) / (b1.t - b0.t);
                b0.p.values
                    .iter()
                    .zip(&b1.p.values)
                    .map(|(a, b)| a + s * (b - a))
                    .collect()
            }
            _ => b0.p.values.clone(),
        }
    }

    /// Writes `t,event,loss,j_norm,active_size` and optionally `c_*`, `p_*` columns.
    pub fn to_csv(&self, path: impl AsRef<Path>, per_atom: bool) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let n = self.breakpoints.first().map_or(0, |b| b.mu.len());
        let mut header: Vec<String> = ["t", "event", "loss", "j_norm", "active_size"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        if per_atom {
            header.extend((0..n).map(|k| format!("c_{k}")));
            header.extend((0..n).map(|k| format!("p_{k}")));
        }
        writer.write_record(&header)?;
        for b in &self.breakpoints {
            let mut row = vec![
                b.t.to_string(),
                b.event.to_string(),
                b.loss.to_string(),
                b.j_norm.to_string(),
                b.active.len().to_string(),
            ];
            if per_atom {
                row.extend(b.mu.coefficients.iter().map(|v| v.to_string()));
                row.extend(b.p.values.iter().map(|v| v.to_string()));
            }
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

impl std::str::FromStr for Event {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let indices = |rest: &str| -> Result<Vec<usize>> {
            rest.split(';')
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse()
                        .map_err(|_| Error::InvalidInput(format!("bad atom index {t:?} in event")))
                })
                .collect()
        };
        match s {
            "start" => Ok(Event::Start),
            "stationary" => Ok(Event::Stationary),
            "horizon_reached" => Ok(Event::HorizonReached),
            "sample" => Ok(Event::Sample),
            _ => match s.split_once(':') {
                Some(("entry", rest)) => Ok(Event::Entry(indices(rest)?)),
                Some(("sign_flip", rest)) => Ok(Event::SignFlip(indices(rest)?)),
                _ => Err(Error::InvalidInput(format!("unknown event {s:?}"))),
            },
        }
    }
}

impl FlowTrajectory {
    /// Reads a trajectory written by [`FlowTrajectory::to_csv`] with per-atom
    /// columns. The column count must match `atoms`; the active set is
    /// recomputed from the dual with tolerance `1e-9`.
    pub fn from_csv(path: impl AsRef<Path>, atoms: &AtomSet) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let width = reader.headers()?.len();
        let n = atoms.len();
        if width < 5 || (width - 5) % 2 != 0 {
            return Err(Error::InvalidInput(
                "trajectory csv lacks per-atom columns".into(),
            ));
        }
        if (width - 5) / 2 != n {
            return Err(Error::InvalidInput(format!(
                "trajectory has {} atoms but the reference problem has {n}",
                (width - 5) / 2
            )));
        }
        let v = atoms.weights();
        let mut breakpoints = Vec::new();
        for record in reader.records() {
            let record = record?;
            let num = |k: usize| crate::measure::parse_float(&record[k]);
            let t = num(0)?;
            let c = (0..n).map(|k| num(5 + k)).collect::<Result<Vec<_>>>()?;
            let p = (0..n).map(|k| num(5 + n + k)).collect::<Result<Vec<_>>>()?;
            let active = (0..n).filter(|&k| p[k].abs() >= v[k] - 1e-9).collect();
            breakpoints.push(Breakpoint {
                t,
                loss: num(2)?,
                j_norm: num(3)?,
                mu: SparseMeasure { coefficients: c },
                p: DualVariable { values: p, time: t },
                active,
                event: record[1].parse()?,
            });
        }
        if breakpoints.is_empty() {
            return Err(Error::InvalidInput("trajectory csv has no rows".into()));
        }
        let termination = match breakpoints.last().map(|b| &b.event) {
            Some(Event::Stationary) => Termination::Stationary,
            Some(Event::HorizonReached) => Termination::Horizon,
            _ => Termination::MaxEvents,
        };
        Ok(FlowTrajectory {
            breakpoints,
            termination,
            warnings: Vec::new(),
        })
    }
}

pub(crate) fn make_breakpoint(
    problem: &Problem,
    t: f64,
    c: &[f64],
    p: &[f64],
    active: Vec<usize>,
    event: Event,
) -> Breakpoint {
    Breakpoint {
        t,
        mu: SparseMeasure {
            coefficients: c.to_vec(),
        },
        p: DualVariable {
            values: p.to_vec(),
            time: t,
        },
        loss: problem.loss(c),
        j_norm: crate::measure::weighted_l1(c, problem.atoms().weights()),
        active,
        event,
    }
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
