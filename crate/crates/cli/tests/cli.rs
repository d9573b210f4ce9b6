use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_bandit-design");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--quiet")
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn design_config(t_max: u64, means: [f64; 2]) -> String {
    format!(
        r#"{{
            "version": 1,
            "seed": 4,
            "arms": 2,
            "prior": {{"kind": "fixed_vector", "means": [{}, {}], "reward": "bernoulli"}},
            "test": {{"kind": "two_sample_t", "first": 0, "second": 1, "sidedness": "two_sided"}},
            "policy_family": "eps_thompson",
            "phis": [0.0, 0.5, 1.0],
            "w": 0.01,
            "t_max": {t_max},
            "replications": 200,
            "grid_points": 4
        }}"#,
        means[0], means[1]
    )
}

fn calibration_config(sidedness: &str) -> String {
    format!(
        r#"{{
            "version": 1, "seed": 1, "arms": 2, "horizon": 200,
            "policy": {{"kind": "uniform"}},
            "null": {{"kind": "bernoulli", "mean": 0.5, "scale": 0.0}},
            "test": {{"kind": "two_sample_t", "first": 0, "second": 1, "sidedness": "{sidedness}"}},
            "replications": 10000
        }}"#
    )
}

fn last_threshold(csv: &str) -> f64 {
    let last = csv.lines().last().unwrap();
    let (t, q) = last.split_once(',').unwrap();
    assert_eq!(t, "200");
    q.parse().unwrap()
}

#[test]
fn calibrate_recovers_the_classical_threshold_under_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cal.json",
        &calibration_config("one_sided_right"),
    );
    let out = run(&["calibrate", "-c", &cfg]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("# tail=right_tail alpha=0.05 replications=10000\nt,q_t\n"));
    let q = last_threshold(&csv);
    assert!((q - 1.645).abs() < 0.05, "q_200 = {q}");
}

#[test]
fn calibrate_two_sided_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cal.json", &calibration_config("two_sided"));
    let out = run(&["calibrate", "-c", &cfg]);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("# tail=abs_two_sided"), "{csv}");
    let q = last_threshold(&csv);
    assert!((q - 1.96).abs() < 0.06, "q_200 = {q}");
}

#[test]
fn design_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", &design_config(300, [0.8, 0.3]));
    let out_dir = dir.path().join("out");
    let out = run(&["--out-dir", out_dir.to_str().unwrap(), "design", "-c", &cfg]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rec: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("recommendation.json")).unwrap()).unwrap();
    assert_eq!(rec["w"], 0.01);
    assert!(rec["horizon"].as_u64().unwrap() <= 300);
    let set = fs::read_to_string(out_dir.join("feasible_set.csv")).unwrap();
    assert!(set.starts_with("phi,steps,mean_reward,ecp\n"));
    assert_eq!(set.lines().count(), 4);
    let rel = fs::read_to_string(out_dir.join("relative_ecp.csv")).unwrap();
    assert_eq!(rel.lines().count(), 51);
    for phi in ["0", "0.5", "1"] {
        assert!(out_dir.join(format!("power_curve_phi_{phi}.csv")).exists());
    }
}

#[test]
fn design_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", &design_config(300, [0.8, 0.3]));
    let one = run(&["--jobs", "1", "design", "-c", &cfg]);
    let two = run(&["--jobs", "2", "design", "-c", &cfg]);
    assert!(one.status.success());
    assert_eq!(one.stdout, two.stdout);
    let reseeded = run(&["--seed", "99", "design", "-c", &cfg]);
    assert_ne!(one.stdout, reseeded.stdout);
}

#[test]
fn infeasible_design_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", &design_config(20, [0.52, 0.48]));
    let out = run(&["design", "-c", &cfg]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no design meets power constraint"));
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = design_config(300, [0.8, 0.3]).replace("\"arms\": 2", "\"arms\": 1");
    let cfg = write(dir.path(), "run.json", &bad);
    let out = run(&["design", "-c", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("K must be ≥ 2"));

    let out = run(&["reproduce", "table9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_file_exits_1() {
    let out = run(&["design", "-c", "/nonexistent/run.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reproduce_json_report() {
    let out = run(&[
        "--format",
        "json",
        "reproduce",
        "appendixF",
        "--scale",
        "quick",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["table"], "appendixF");
    assert_eq!(report["scale"], "quick");
    let criteria: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["criterion"].as_str().unwrap())
        .collect();
    assert!(criteria.contains(&"A10") && criteria.contains(&"A11"));
    // The summary goes to stderr when results go to stdout.
    assert!(String::from_utf8_lossy(&out.stderr).contains("checks passed"));
}
