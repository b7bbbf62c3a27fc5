use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use barron_iss::Dataset;
use serde_json::{json, Value};

fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy1d.csv")
}

fn base_config() -> Value {
    json!({
        "dataset_path": toy(),
        "atoms": {"kind": "grid", "construction": {"kind": "nested_grid"}, "level": 2},
        "reports": ["ideal_loss", "ideal_bregman"],
    })
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let path = dir.join("cfg.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn run(sub: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_barron-iss"))
        .arg(sub)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_smoke_run_writes_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &base_config());
    let out = dir.path().join("out");
    let o = run("solve", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in [
        "trajectory.csv",
        "metrics.csv",
        "bounds_ideal_loss.csv",
        "bounds_ideal_bregman.csv",
        "run.json",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let meta: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(meta["status"], "ok");
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("t,loss,j_norm,bregman"));
}

#[test]
fn invalid_epsilon_is_a_validation_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["perturbation"] = json!({"kind": "radon_nikodym", "epsilon": 2.0});
    let cfg = write_config(dir.path(), &cfg);
    let o = run("solve", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epsilon"), "{}", stderr(&o));
}

#[test]
fn unknown_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["horizn"] = json!(3.0);
    let cfg = write_config(dir.path(), &cfg);
    let o = run("solve", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_inputs_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        "solve",
        &dir.path().join("nope.json"),
        &dir.path().join("out"),
        &[],
    );
    assert_eq!(o.status.code(), Some(4));

    let mut cfg = base_config();
    cfg["dataset_path"] = json!("absent.csv");
    let cfg = write_config(dir.path(), &cfg);
    let o = run("solve", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn bad_arguments_exit_with_two() {
    let o = Command::new(env!("CARGO_BIN_EXE_barron-iss"))
        .arg("solve")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_certifies_exact_fit_toy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &base_config());
    let out = dir.path().join("out");
    let o = run("oracle", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("oracle.json")).unwrap()).unwrap();
    assert_eq!(v["certified"], true);
    assert!(v["loss"].as_f64().unwrap() < 1e-20);
}

#[test]
fn perturbed_targets_are_delta_away() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["perturbation"] = json!({"kind": "noise", "delta": 0.05, "seed": 9});
    let cfg = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let o = run("perturb", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let clean = Dataset::from_csv(toy()).unwrap();
    let noisy = Dataset::from_csv(out.join("perturbed.csv")).unwrap();
    let diff: Vec<f64> = noisy
        .targets()
        .iter()
        .zip(clean.targets())
        .map(|(a, b)| a - b)
        .collect();
    let norm = clean
        .weights()
        .iter()
        .zip(&diff)
        .map(|(w, d)| w * d * d)
        .sum::<f64>()
        .sqrt();
    assert!((norm - 0.05).abs() < 1e-12, "{norm}");
}

#[test]
fn seed_flag_overrides_the_perturbation_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["perturbation"] = json!({"kind": "noise", "delta": 0.05, "seed": 9});
    let cfg = write_config(dir.path(), &cfg);
    let read = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        assert_eq!(
            run("perturb", &cfg, &out, &["--seed", seed]).status.code(),
            Some(0)
        );
        std::fs::read(out.join("perturbed.csv")).unwrap()
    };
    assert_eq!(read("1", "a"), read("1", "b"));
    assert_ne!(read("1", "c"), read("2", "d"));
}

#[test]
fn report_rejects_a_trajectory_from_another_atom_set() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), &base_config());
    assert_eq!(run("solve", &cfg, &out, &[]).status.code(), Some(0));

    let o = run("report", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("report.json").exists());

    let mut other = base_config();
    other["atoms"]["level"] = json!(1);
    let cfg = write_config(dir.path(), &other);
    let o = run("report", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("does not pair"), "{}", stderr(&o));
}

#[test]
fn report_without_trajectory_is_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &base_config());
    let o = run("report", &cfg, &dir.path().join("empty"), &[]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn discretize_writes_gamma_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config();
    cfg["discretize"] =
        json!({"construction": {"kind": "nested_grid"}, "levels": 3, "lambda": 50.0});
    let cfg = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let o = run("discretize", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("gamma.csv")).unwrap();
    assert!(text.starts_with("N,maxdiam,F_min"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn euler_and_bregman_solvers_run() {
    for solver in [
        json!({"kind": "euler", "step": 0.01}),
        json!({"kind": "bregman", "lambda": 2.0, "iters": 20}),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = base_config();
        cfg["solver"] = solver;
        cfg["horizon"] = json!(40.0);
        let cfg = write_config(dir.path(), &cfg);
        let o = run("solve", &cfg, &dir.path().join("out"), &[]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
}
