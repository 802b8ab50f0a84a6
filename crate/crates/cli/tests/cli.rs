use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use zomd_cli::ExperimentConfig;

const MINIMAL: &str = "[problem]\nname = \"l2_distance\"\nn = 4\n";

fn zomd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zomd")).current_dir(dir).args(args).output().expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("min.toml"), MINIMAL).unwrap();
    dir
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn minimal_run_writes_one_row_per_iteration() {
    let dir = setup();
    let out = zomd(dir.path(), &["run", "--config", "min.toml", "--set", "iterations=120", "--out", "o"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("o/run_seed0.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k,F_xk,running_regret,dual_norm_g,V_to_xstar"));
    assert_eq!(lines.count(), 120);
    assert!(dir.path().join("o/run_seed0.json").exists());
}

#[test]
fn unknown_problem_exits_with_config_code() {
    let dir = setup();
    let out = zomd(dir.path(), &["run", "--config", "min.toml", "--set", "problem.name=rosenbrock"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("rosenbrock"));
}

#[test]
fn malformed_override_exits_with_config_code() {
    let dir = setup();
    assert_eq!(code(&zomd(dir.path(), &["run", "--config", "min.toml", "--set", "iterations"])), 2);
    assert_eq!(code(&zomd(dir.path(), &["run", "--config", "missing.toml"])), 2);
}

#[test]
fn oversized_mu_exits_with_domain_code_and_logs_point() {
    let dir = setup();
    let out = zomd(
        dir.path(),
        &["run", "--config", "min.toml", "--set", "iterations=10", "--set", "smoothing.mu=5", "--out", "o"],
    );
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("probe point ["), "{err}");
    assert!(err.contains("mu = 5e0"), "{err}");
}

#[test]
fn config_echo_round_trips() {
    let dir = setup();
    let out = zomd(
        dir.path(),
        &["run", "--config", "min.toml", "--set", "iterations=30", "--set", "noise.kind=uniform", "--set",
          "noise.delta=1e-4", "--seeds", "3,4", "--out", "o"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/run_seed4.json")).unwrap()).unwrap();
    let echoed = ExperimentConfig::from_toml(meta["config"].as_str().unwrap()).unwrap();
    let original = ExperimentConfig::load(
        Some(&dir.path().join("min.toml")),
        &[
            "iterations=30".into(),
            "noise.kind=uniform".into(),
            "noise.delta=1e-4".into(),
            "seeds=[3,4]".into(),
            "output.dir=\"o\"".into(),
        ],
    )
    .unwrap();
    assert_eq!(echoed, original);
    assert_eq!(meta["run"]["seed"], 4);
    assert!(meta["generated_at_unix"].is_u64());
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let dir = setup();
    let args = |out: &'static str, workers: &'static str| {
        vec!["sweep", "--config", "min.toml", "--axis", "N", "--values", "50,200", "--seeds", "1,2,3", "--workers", workers,
             "--set", "noise.kind=adversarial_align", "--set", "noise.delta_multiple=10", "--out", out]
    };
    assert_eq!(code(&zomd(dir.path(), &args("a", "1"))), 0);
    assert_eq!(code(&zomd(dir.path(), &args("b", "3"))), 0);
    let mut names: Vec<_> = fs::read_dir(dir.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    assert_eq!(names.len(), 7);
    for name in names {
        let a = fs::read(dir.path().join("a").join(&name)).unwrap();
        let b = fs::read(dir.path().join("b").join(&name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

fn summary_rows(dir: &Path, out: &str) -> Vec<Vec<String>> {
    let text = fs::read_to_string(dir.join(out).join("summary.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("axis,value,seed,n,n_prescribed,n_used,epsilon,delta,delta0,tau,mu,final_regret,final_v_to_xstar")
    );
    lines.map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn iteration_sweep_has_one_row_per_value_and_seed() {
    let dir = setup();
    let out = zomd(
        dir.path(),
        &["sweep", "--config", "min.toml", "--axis", "N", "--values", "100,400,1600,6400", "--seeds", "1,2", "--out", "s"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = summary_rows(dir.path(), "s");
    assert_eq!(rows.len(), 8);
    for row in &rows {
        assert_eq!(row[1], row[5], "n_used follows the swept N");
        assert_eq!(row[4], "76800", "prescribed N is reported alongside");
    }
}

#[test]
fn delta_sweep_scales_threshold_and_degrades_regret() {
    let dir = setup();
    let out = zomd(
        dir.path(),
        &["sweep", "--config", "min.toml", "--axis", "delta", "--values", "0,1,10,100", "--seeds", "1,2,3",
          "--set", "iterations=400", "--out", "d"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = summary_rows(dir.path(), "d");
    assert_eq!(rows.len(), 12);
    let mean = |value: &str| {
        let picked: Vec<f64> = rows.iter().filter(|r| r[1] == value).map(|r| r[11].parse().unwrap()).collect();
        picked.iter().sum::<f64>() / picked.len() as f64
    };
    for row in &rows {
        let delta: f64 = row[7].parse().unwrap();
        let delta0: f64 = row[8].parse().unwrap();
        let multiple: f64 = row[1].parse().unwrap();
        assert!((delta - multiple * delta0).abs() <= 1e-15);
    }
    assert!(mean("100") > 3.0 * mean("0"));
    assert!(mean("1") < 2.0 * mean("0"));
}

#[test]
fn dimension_sweep_at_fixed_n() {
    let dir = setup();
    let out = zomd(
        dir.path(),
        &["sweep", "--config", "min.toml", "--axis", "n", "--values", "4,16,64", "--set", "iterations=300", "--out", "n"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = summary_rows(dir.path(), "n");
    let dims: Vec<&str> = rows.iter().map(|r| r[3].as_str()).collect();
    assert_eq!(dims, ["4", "16", "64"]);
    assert!(rows.iter().all(|r| r[5] == "300"));
}

#[test]
fn verify_passes_and_forced_fail_exits_one() {
    let dir = setup();
    let base = ["verify", "--config", "min.toml", "--set", "iterations=300", "--samples", "20000"];
    let out = zomd(dir.path(), &[&base[..], &["--out", "ok"]].concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ok/verify_report.json")).unwrap()).unwrap();
    assert_eq!(report["all_passed"], true);
    let reports = report["reports"].as_array().unwrap();
    assert!(reports.iter().any(|r| r["id"] == "modulus_moment" && r["samples"] == 20000));

    let out = zomd(dir.path(), &[&base[..], &["--set", "verify.bound_scale=0.5", "--out", "bad"]].concat());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn shipped_configs_parse_and_resolve() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let config = ExperimentConfig::load(Some(&path), &[]).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        config.resolve().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 4);
}

#[test]
fn entropy_config_runs_on_the_simplex() {
    let dir = setup();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/simplex.toml");
    let out = zomd(
        dir.path(),
        &["run", "--config", config.to_str().unwrap(), "--set", "iterations=3000", "--seeds", "1", "--out", "e"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("e/run_seed1.json")).unwrap()).unwrap();
    assert_eq!(meta["run"]["prox_kind"], "entropy");
    assert_eq!(meta["run"]["q"], "inf");
    // R² = ln n at the barycenter; the iterate should have moved toward the vertex
    let r2 = meta["run"]["radius_sq"].as_f64().unwrap();
    assert!((r2 - 32f64.ln()).abs() < 1e-12);
    assert!(meta["final_v_to_xstar"].as_f64().unwrap() < r2);
}
