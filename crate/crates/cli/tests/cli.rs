use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eigencoupler"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("EIGENCOUPLER_THREADS")
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn spectrum_on_ou_matches_integers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"potential": "ou", "epsilon": 0.5, "grid": {"n": 2000, "half_width": 8.0}, "spectrum": {"modes": 4}}"#;
    let out = run(&["spectrum", "--config", cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let spec = read_json(&dir.path().join("spectrum.json"));
    for k in 1..=4 {
        let l = spec["table"][k]["lambda"].as_f64().unwrap();
        assert!((l - k as f64).abs() / (k as f64) < 1e-3, "lambda_{k} = {l}");
    }
    for f in ["eigenfunctions.csv", "eigenfunctions.svg", "manifest.json", "resolved_config.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["command"], "spectrum");
    assert_eq!(manifest["exit_code"], 0);
}

const SMALL: &str = r#"{"potential": "double_well", "epsilon": 0.15, "grid": {"n": 400},
    "simulation": {"n_paths": 40, "horizon": 0.5, "dt": 1e-3},
    "outputs": {"trajectory_paths": 4, "stride": 10}}"#;

#[test]
fn simulate_is_reproducible_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    assert!(run(&["simulate", "--config", SMALL, "--seed", "7"], a.path()).status.success());
    assert!(run(&["simulate", "--config", SMALL, "--seed", "7", "--threads", "2"], b.path()).status.success());
    assert!(run(&["simulate", "--config", SMALL, "--seed", "8"], c.path()).status.success());
    for f in ["trajectories.csv", "jumps.csv", "final_states.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f} differs across thread counts");
    }
    let traj = std::fs::read_to_string(a.path().join("trajectories.csv")).unwrap();
    assert!(traj.starts_with("path_id,t,x,y\n"));
    // 4 recorded paths, 500 steps at stride 10 plus the initial point, plus one row per jump.
    let jumps = std::fs::read_to_string(a.path().join("jumps.csv")).unwrap().lines().count() - 1;
    assert_eq!(traj.lines().count(), 1 + 4 * 51 + jumps);
    assert_eq!(std::fs::read_to_string(a.path().join("final_states.csv")).unwrap().lines().count(), 41);
    assert_ne!(
        std::fs::read(a.path().join("final_states.csv")).unwrap(),
        std::fs::read(c.path().join("final_states.csv")).unwrap()
    );
}

#[test]
fn thread_flag_wins_over_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_eigencoupler"))
        .args(["synth", "--config", SMALL, "--threads", "2", "--out"])
        .arg(dir.path())
        .env("EIGENCOUPLER_THREADS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(read_json(&dir.path().join("manifest.json"))["threads"], 2);
}

#[test]
fn invalid_config_reports_every_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"potential": [1.0, 0.0, 1.0], "epsilon": -1, "simulation": {"dt": "x"}, "colour": 1}"#;
    let out = run(&["oracle", "--config", cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for key in ["epsilon", "simulation.dt", "colour"] {
        assert!(err.contains(key), "missing error for {key}: {err}");
    }
}

#[test]
fn single_well_is_rejected_as_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["synth", "--config", r#"{"potential": "ou", "epsilon": 0.5}"#], dir.path());
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn oracle_runs_per_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"potential": "double_well", "epsilon": [0.25, 0.15], "oracle": {"n": 120}}"#;
    let out = run(&["oracle", "--config", cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for eps in ["0.25", "0.15"] {
        let r = read_json(&dir.path().join(format!("eps_{eps}/oracle.json")));
        assert_eq!(r["passed"], true);
        assert!(r["conditional_law"]["max_tv"].as_f64().unwrap() <= 1e-8);
    }
}

#[test]
fn verify_status_matches_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--config", SMALL], dir.path());
    let report = read_json(&dir.path().join("verify.json"));
    let checks = report["checks"].as_array().unwrap();
    let all = checks.iter().all(|c| c["passed"] == true);
    assert_eq!(out.status.code(), Some(if all { 0 } else { 3 }));
    for c in checks {
        let name = c["name"].as_str().unwrap();
        if !name.starts_with("Monte Carlo") && !name.starts_with("tracking") {
            assert_eq!(c["passed"], true, "{name}: {}", c["detail"]);
        }
    }
}

#[test]
fn sweep_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"potential": "double_well", "epsilon": [0.3, 0.2], "grid": {"n": 400},
        "simulation": {"n_paths": 40, "horizon": 0.5, "dt": 1e-3},
        "stats": {"rate_paths": 8, "rate_horizon": 20, "rate_dt": 1e-3}}"#;
    let out = run(&["sweep", "--config", cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let tracking = std::fs::read_to_string(dir.path().join("tracking.csv")).unwrap();
    assert_eq!(tracking.lines().count(), 1 + 2 * 2);
    let rates = std::fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    assert_eq!(rates.lines().count(), 1 + 2 * 2);
    let sweep = read_json(&dir.path().join("sweep.json"));
    assert_eq!(sweep["oracle_nondecreasing"], serde_json::json!([true, true]));
    assert!(dir.path().join("tracking.svg").exists());
}
