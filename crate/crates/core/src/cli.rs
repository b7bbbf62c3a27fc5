//! Command-line runner: `barron-iss <subcommand> --config <path> [--out <dir>] [--seed <u64>] [--deterministic]`.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::{AtomSource, ExperimentConfig, SolverSpec};
use crate::error::Error;
use crate::lab::{
    bias_bound_report, bregman_distance, discrepancy_stop, ideal_bregman_report, ideal_loss_report,
    noise_bound_report, BiasVariant, BoundReport, PerturbationKind,
};
use crate::measure::DomainBox;
use crate::operator::Dataset;
use crate::oracle::{minimal_norm_minimizer, ReferenceSolution};
use crate::solver::{
    iterates_to_trajectory, solve_bregman, solve_euler_iss_with, solve_exact_iss_with,
    EulerOptions, ExactOptions, FlowTrajectory, Problem,
};
use crate::tessellation::{
    build_level, build_refinement, discretization_bound_report, gamma_convergence_experiment,
    Tessellation,
};

/// Largest problem for which the reference solution is computed automatically.
const REFERENCE_MAX_ATOMS: usize = 200;
const REFERENCE_MAX_SAMPLES: usize = 500;

#[derive(Debug, Parser)]
#[command(
    name = "barron-iss",
    version,
    about = "Inverse scale space experiments on shallow networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured flow and write trajectory, metrics and bounds.
    Solve(CommonArgs),
    /// Write the perturbed dataset.
    Perturb(CommonArgs),
    /// Minimize the discretized objective over a refinement sequence.
    Discretize(CommonArgs),
    /// Compute the minimal-norm reference solution and its certificate.
    Oracle(CommonArgs),
    /// Evaluate the configured bounds on an existing trajectory.
    Report(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed and the perturbation seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Accepted for scripting; every run is single-threaded and deterministic.
    #[arg(long)]
    pub deterministic: bool,
}

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Solver(String),
    MissingArtifact(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Solver(_) => 3,
            Failure::MissingArtifact(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid configuration: {m}"),
            Failure::Solver(m) => write!(f, "solver failure: {m}"),
            Failure::MissingArtifact(m) => write!(f, "missing artifact: {m}"),
        }
    }
}

fn validation(e: Error) -> Failure {
    Failure::Validation(e.to_string())
}

fn solver(e: Error) -> Failure {
    Failure::Solver(e.to_string())
}

fn io(e: impl fmt::Display) -> Failure {
    Failure::Solver(format!("cannot write output: {e}"))
}

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("barron-iss: {f}");
            f.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let (name, args) = match &cli.command {
        Command::Solve(a) => ("solve", a),
        Command::Perturb(a) => ("perturb", a),
        Command::Discretize(a) => ("discretize", a),
        Command::Oracle(a) => ("oracle", a),
        Command::Report(a) => ("report", a),
    };
    let setup = Setup::load(args)?;
    match &cli.command {
        Command::Solve(_) => solve(&setup, name),
        Command::Perturb(_) => perturb(&setup, name),
        Command::Discretize(_) => discretize(&setup, name),
        Command::Oracle(_) => oracle(&setup, name),
        Command::Report(_) => report(&setup, name),
    }
}

/// Loaded and validated inputs shared by the subcommands.
struct Setup {
    cfg: ExperimentConfig,
    out: PathBuf,
    deterministic: bool,
    clean: Problem,
    /// Problem on the perturbed data, or the clean one.
    run: Problem,
    tessellation: Option<Tessellation>,
}

impl Setup {
    fn load(args: &CommonArgs) -> Result<Self, Failure> {
        if !args.config.exists() {
            return Err(Failure::MissingArtifact(format!(
                "config {}",
                args.config.display()
            )));
        }
        let mut cfg = ExperimentConfig::load(&args.config).map_err(validation)?;
        if let Some(seed) = args.seed {
            cfg.seed = seed;
            if let Some(p) = &mut cfg.perturbation {
                p.seed = seed;
            }
        }
        if let Some(out) = &args.out {
            cfg.output_dir = out.clone();
        }
        cfg.validate().map_err(validation)?;
        if !cfg.dataset_path.exists() {
            return Err(Failure::MissingArtifact(format!(
                "dataset_path {}",
                cfg.dataset_path.display()
            )));
        }
        if let AtomSource::Csv { path } = &cfg.atoms {
            if !path.exists() {
                return Err(Failure::MissingArtifact(format!(
                    "atoms.path {}",
                    path.display()
                )));
            }
        }
        let data = Dataset::from_csv(&cfg.dataset_path).map_err(validation)?;
        let (atoms, tessellation) = cfg.build_atoms(data.dim()).map_err(validation)?;
        let activation = cfg.activation().map_err(validation)?;
        let clean = Problem::new(data.clone(), atoms, activation).map_err(validation)?;
        let run = match &cfg.perturbation {
            Some(p) => {
                p.validate(data.len()).map_err(validation)?;
                clean
                    .with_dataset(p.apply(&data).map_err(validation)?)
                    .map_err(validation)?
            }
            None => clean.clone(),
        };
        let out = cfg.output_dir.clone();
        std::fs::create_dir_all(&out).map_err(io)?;
        Ok(Setup {
            cfg,
            out,
            deterministic: args.deterministic,
            clean,
            run,
            tessellation,
        })
    }

    fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    fn small(problem: &Problem) -> bool {
        problem.n_atoms() <= REFERENCE_MAX_ATOMS && problem.n_samples() <= REFERENCE_MAX_SAMPLES
    }

    fn reference(problem: &Problem) -> Option<ReferenceSolution> {
        if Setup::small(problem) {
            minimal_norm_minimizer(problem).ok()
        } else {
            None
        }
    }

    fn run_json(&self, subcommand: &str, status: &str, extra: Value) -> Result<(), Failure> {
        let mut doc = json!({
            "subcommand": subcommand,
            "version": env!("CARGO_PKG_VERSION"),
            "status": status,
            "seed": self.cfg.seed,
            "deterministic": self.deterministic,
            "config": self.cfg,
            "notes": ["perturbation delta bounds the L2(rho) norm of the target noise"],
        });
        if let (Value::Object(d), Value::Object(e)) = (&mut doc, extra) {
            d.extend(e);
        }
        let text = serde_json::to_string_pretty(&doc).map_err(io)?;
        std::fs::write(self.path("run.json"), text + "\n").map_err(io)
    }
}

fn run_solver(setup: &Setup) -> Result<FlowTrajectory, Error> {
    let cfg = &setup.cfg;
    let horizon = cfg.horizon.unwrap_or(f64::INFINITY);
    match cfg.solver {
        SolverSpec::Exact => solve_exact_iss_with(
            &setup.run,
            ExactOptions {
                horizon,
                max_events: cfg.max_events,
                tol: cfg.tolerances.stationarity,
                ..ExactOptions::default()
            },
        ),
        SolverSpec::Euler { step } => solve_euler_iss_with(
            &setup.run,
            step,
            horizon,
            EulerOptions {
                tol: cfg.tolerances.stationarity,
                ..EulerOptions::default()
            },
        ),
        SolverSpec::Bregman { lambda, iters } => {
            let its = solve_bregman(&setup.run, lambda, iters, cfg.tolerances.inner)?;
            Ok(iterates_to_trajectory(&setup.run, &its))
        }
    }
}

fn write_metrics(
    path: &Path,
    traj: &FlowTrajectory,
    reference: Option<&ReferenceSolution>,
    problem: &Problem,
) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["t", "loss", "j_norm", "bregman"])
        .map_err(io)?;
    for b in &traj.breakpoints {
        let d = reference
            .and_then(|r| bregman_distance(&r.mu_dagger, &b.mu, &b.p.values, problem.atoms()).ok())
            .map_or(String::new(), |d| d.to_string());
        w.write_record([b.t.to_string(), b.loss.to_string(), b.j_norm.to_string(), d])
            .map_err(io)?;
    }
    w.flush().map_err(io)
}

fn solve(setup: &Setup, name: &str) -> Result<(), Failure> {
    let traj = match run_solver(setup) {
        Ok(t) => t,
        Err(e) => {
            setup.run_json(name, "solver_failure", json!({ "error": e.to_string() }))?;
            return Err(solver(e));
        }
    };
    traj.to_csv(setup.path("trajectory.csv"), true)
        .map_err(io)?;
    let reference = Setup::reference(&setup.clean);
    write_metrics(
        &setup.path("metrics.csv"),
        &traj,
        reference.as_ref(),
        &setup.clean,
    )?;
    let reports = evaluate_reports(setup, &traj, reference.as_ref())?;
    for r in &reports {
        r.to_csv(setup.path(&format!("bounds_{}.csv", r.theorem_id)))
            .map_err(io)?;
    }
    let stop = match (
        setup.cfg.discrepancy_tau,
        setup.cfg.perturbation.map(|p| p.kind),
    ) {
        (Some(tau), Some(PerturbationKind::Noise { delta })) => {
            let s = discrepancy_stop(&traj, delta, tau).map_err(validation)?;
            json!({ "time": s.time, "index": s.index, "reached": s.reached })
        }
        _ => Value::Null,
    };
    setup.run_json(
        name,
        "ok",
        json!({
            "termination": traj.termination,
            "breakpoints": traj.len(),
            "warnings": traj.warnings,
            "reference_available": reference.is_some(),
            "reference_certified": reference.as_ref().map(|r| r.certified),
            "discrepancy_stop": stop,
            "reports": reports.iter().map(|r| json!({
                "theorem_id": r.theorem_id,
                "applicable": r.applicable,
                "estimate": r.estimate,
                "min_slack": r.min_slack(),
                "notes": r.notes,
            })).collect::<Vec<_>>(),
        }),
    )
}

fn evaluate_reports(
    setup: &Setup,
    traj: &FlowTrajectory,
    reference: Option<&ReferenceSolution>,
) -> Result<Vec<BoundReport>, Failure> {
    let cfg = &setup.cfg;
    if cfg.reports.is_empty() {
        return Ok(Vec::new());
    }
    let missing = |tag: &str| {
        Failure::Validation(format!(
            "reports: {tag} needs a reference solution, available for at most {REFERENCE_MAX_ATOMS} atoms and {REFERENCE_MAX_SAMPLES} samples"
        ))
    };
    let need = |tag: &str| reference.ok_or_else(|| missing(tag));
    let perturbed = cfg.perturbation.is_some();
    let run_reference = if perturbed {
        Setup::reference(&setup.run)
    } else {
        reference.cloned()
    };
    let kind = cfg.perturbation.map(|p| p.kind);
    let wrong = |tag: &str, wanted: &str| {
        Failure::Validation(format!("reports: {tag} needs a {wanted} perturbation"))
    };
    let mut out = Vec::new();
    for tag in &cfg.reports {
        let r = match tag.as_str() {
            "ideal_loss" => {
                let r = run_reference.as_ref().ok_or_else(|| missing(tag))?;
                ideal_loss_report(traj, r)
            }
            "ideal_bregman" => {
                let r = run_reference.as_ref().ok_or_else(|| missing(tag))?;
                unpaired(tag, ideal_bregman_report(traj, r, setup.run.atoms()))?
            }
            "noise" => match kind {
                Some(PerturbationKind::Noise { delta }) => unpaired(
                    tag,
                    noise_bound_report(traj, need(tag)?, setup.clean.atoms(), delta)
                        .map(|n| n.report),
                )?,
                _ => return Err(wrong(tag, "noise")),
            },
            "bias_general" | "bias_radon" | "bias_sampling" | "bias_wasserstein" => {
                let variant = match (tag.as_str(), kind) {
                    ("bias_general", Some(k)) if !matches!(k, PerturbationKind::Noise { .. }) => {
                        BiasVariant::General
                    }
                    ("bias_radon", Some(PerturbationKind::RadonNikodym { epsilon })) => {
                        BiasVariant::RadonNikodym { epsilon }
                    }
                    ("bias_sampling", Some(PerturbationKind::Subsample { m_sub })) => {
                        BiasVariant::Sampling {
                            m_sub,
                            delta_prob: cfg.delta_prob,
                        }
                    }
                    (
                        "bias_wasserstein",
                        Some(PerturbationKind::WassersteinShift { epsilon, metric }),
                    ) => BiasVariant::Wasserstein { epsilon, metric },
                    _ => return Err(wrong(tag, "matching sampling-bias")),
                };
                let rb = run_reference.as_ref().ok_or_else(|| missing(tag))?;
                unpaired(
                    tag,
                    bias_bound_report(traj, &setup.clean, &setup.run, need(tag)?, rb, variant),
                )?
            }
            "discretization" => discretization(setup, traj, run_reference.as_ref())?,
            other => {
                return Err(Failure::Validation(format!(
                    "reports: unknown tag {other:?}"
                )))
            }
        };
        out.push(r);
    }
    Ok(out)
}

// Euler steps may leave the dual slightly outside the subdifferential, so
// Bregman distances along such a trajectory are not defined.
fn unpaired(tag: &str, report: Result<BoundReport, Error>) -> Result<BoundReport, Failure> {
    match report {
        Ok(r) => Ok(r),
        Err(Error::Inconsistent(m)) => {
            let mut r = BoundReport::from_parts(tag, Vec::new(), Vec::new(), Vec::new(), false);
            r.notes.push(format!("not evaluated: {m}"));
            Ok(r)
        }
        Err(e) => Err(validation(e)),
    }
}

// Reference on the same construction two levels finer, taken as the limit of the exact flow.
fn discretization(
    setup: &Setup,
    traj: &FlowTrajectory,
    nu: Option<&ReferenceSolution>,
) -> Result<BoundReport, Failure> {
    let (tess, radius) = match (&setup.tessellation, &setup.cfg.atoms) {
        (Some(t), AtomSource::Grid { radius, .. }) => (t, *radius),
        _ => {
            return Err(Failure::Validation(
                "reports: discretization needs grid atoms".into(),
            ))
        }
    };
    let dom = DomainBox::symmetric(setup.run.dataset().dim() + 1, radius).map_err(validation)?;
    let fine_t = build_level(
        &dom,
        tess.construction,
        tess.level + 2,
        setup.cfg.weight_variant,
    )
    .map_err(validation)?;
    let fine = Problem::new(
        setup.run.dataset().clone(),
        fine_t.atoms,
        setup.run.activation().clone(),
    )
    .map_err(validation)?;
    let limit = solve_exact_iss_with(
        &fine,
        ExactOptions {
            max_events: setup.cfg.max_events.max(100_000),
            tol: setup.cfg.tolerances.stationarity,
            ..ExactOptions::default()
        },
    )
    .map_err(solver)?;
    let mu_ref = limit.last().mu.clone();
    let nu_dagger = match nu {
        Some(r) => r.mu_dagger.clone(),
        None => solve_exact_iss_with(&setup.run, ExactOptions::default())
            .map_err(solver)?
            .last()
            .mu
            .clone(),
    };
    discretization_bound_report(traj, &setup.run, tess, &fine, &mu_ref, Some(&nu_dagger))
        .map_err(validation)
}

fn perturb(setup: &Setup, name: &str) -> Result<(), Failure> {
    let spec = setup.cfg.perturbation.ok_or_else(|| {
        Failure::Validation("perturbation: required by the perturb subcommand".into())
    })?;
    setup
        .run
        .dataset()
        .to_csv(setup.path("perturbed.csv"))
        .map_err(io)?;
    setup.run_json(
        name,
        "ok",
        json!({ "perturbation": spec, "samples": setup.run.n_samples() }),
    )
}

fn discretize(setup: &Setup, name: &str) -> Result<(), Failure> {
    let spec = setup.cfg.discretize.ok_or_else(|| {
        Failure::Validation("discretize: required by the discretize subcommand".into())
    })?;
    let ds = setup.run.dataset();
    let dom = DomainBox::symmetric(ds.dim() + 1, spec.radius).map_err(validation)?;
    let seq = build_refinement(
        &dom,
        spec.construction,
        spec.levels,
        setup.cfg.weight_variant,
    )
    .map_err(validation)?;
    let exp = gamma_convergence_experiment(ds, setup.run.activation(), &seq, spec.lambda)
        .map_err(solver)?;
    exp.to_csv(setup.path("gamma.csv")).map_err(io)?;
    setup.run_json(
        name,
        "ok",
        json!({
            "max_increase": exp.max_increase,
            "cauchy_gap": exp.cauchy_gap,
            "pairing_gap": exp.pairing_gap,
            "flagged_rows": exp.rows.iter().filter(|r| r.flagged).count(),
        }),
    )
}

fn oracle(setup: &Setup, name: &str) -> Result<(), Failure> {
    let r = minimal_norm_minimizer(&setup.run).map_err(solver)?;
    let text = serde_json::to_string_pretty(&r).map_err(io)?;
    std::fs::write(setup.path("oracle.json"), text + "\n").map_err(io)?;
    setup.run_json(
        name,
        "ok",
        json!({ "certified": r.certified, "j_value": r.j_value }),
    )
}

fn report(setup: &Setup, name: &str) -> Result<(), Failure> {
    let path = setup.path("trajectory.csv");
    if !path.exists() {
        return Err(Failure::MissingArtifact(format!(
            "{} (run solve first)",
            path.display()
        )));
    }
    let traj = FlowTrajectory::from_csv(&path, setup.run.atoms()).map_err(|e| {
        Failure::Validation(format!(
            "trajectory does not pair with the configured problem: {e}"
        ))
    })?;
    let reference = Setup::reference(&setup.clean);
    let reports = evaluate_reports(setup, &traj, reference.as_ref())?;
    for r in &reports {
        r.to_csv(setup.path(&format!("bounds_{}.csv", r.theorem_id)))
            .map_err(io)?;
    }
    let tags: Vec<&str> = reports.iter().map(|r| r.theorem_id.as_str()).collect();
    std::fs::write(
        setup.path("report.json"),
        serde_json::to_string_pretty(&json!({ "subcommand": name, "reports": tags }))
            .map_err(io)?
            + "\n",
    )
    .map_err(io)
}
