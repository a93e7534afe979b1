use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_circpoc");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("CIRCPOC_SEED").env_remove("CIRCPOC_OUT").output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn specs_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios"))
}

const MODERATE: [&str; 4] = ["--mu", "2.5,2.5,0", "--sigma", "1.5,1.5,1.5"];

#[test]
fn poc_reports_value_and_timings() {
    let v = json(&run(&[&["poc", "--circles", "3,3", "--grid", "20"][..], &MODERATE].concat()));
    assert_eq!(v["schema_version"], 1);
    let p = v["poc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert!(v["init_ms"].as_f64().unwrap() >= 0.0 && v["eval_ms"].as_f64().unwrap() >= 0.0);
}

#[test]
fn zero_sigma_is_invalid_input() {
    let out = run(&["poc", "--mu", "2.5,2.5,0", "--sigma", "0,1.5,1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma.x"));
}

#[test]
fn malformed_flags_are_invalid_input() {
    assert_eq!(run(&["poc", "--mu", "1,2", "--sigma", "1,1,1"]).status.code(), Some(2));
    assert_eq!(run(&["poc", "--ego", "2x4.5", "--mu", "1,2,0", "--sigma", "1,1,1"]).status.code(), Some(2));
    assert_eq!(run(&["poc", "--nbeta", "1", "--mu", "1,2,0", "--sigma", "1,1,1"]).status.code(), Some(2));
}

#[test]
fn far_mean_has_negligible_probability() {
    let v = json(&run(&["poc", "--circles", "1,1", "--mu", "100,0,0", "--sigma", "0.5,0.5,0.5"]));
    assert!(v["poc"].as_f64().unwrap() < 1e-12);
}

#[test]
fn oracle_repeats_with_seed() {
    let args = [&["oracle", "--samples", "20000", "--seed", "11"][..], &MODERATE].concat();
    let (a, b) = (json(&run(&args)), json(&run(&args)));
    assert_eq!(a["estimate"], b["estimate"]);
    assert_eq!(a["seed"], 11);
}

#[test]
fn oracle_with_tight_overlap_is_certain() {
    let v = json(&run(&["oracle", "--mu", "0.5,0,0", "--sigma", "1e-9,1e-9,1e-9", "--samples", "1000"]));
    assert_eq!(v["estimate"], 1.0);
}

#[test]
fn oracle_on_circles_matches_estimator() {
    let p = json(&run(&[&["poc", "--circles", "3,3", "--grid", "40"][..], &MODERATE].concat()))["poc"].as_f64().unwrap();
    let o = json(&run(&[&["oracle", "--circles", "3,3", "--samples", "100000"][..], &MODERATE].concat()));
    let (est, se) = (o["estimate"].as_f64().unwrap(), o["std_error"].as_f64().unwrap());
    assert!((p - est).abs() <= 3.0 * se + 1e-2, "{p} vs {est} ± {se}");
}

#[test]
fn scenario_writes_csv_summary_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let spec = specs_dir().join("intersection_collision.json");
    let out = run(&[
        "scenario",
        "--spec",
        spec.to_str().unwrap(),
        "--circles",
        "1,3",
        "--oracle-samples",
        "2000",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let summary = json(&out);
    assert_eq!(summary["circle_counts"], serde_json::json!([1, 3]));
    let csv = std::fs::read_to_string(dir.path().join("scenario_intersection_collision.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,distance,mu_x,mu_y,mu_theta,sigma_x,sigma_y,sigma_theta,poc_1,poc_3,oracle,oracle_std_error");
    assert_eq!(lines.count(), 150);
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("scenario_intersection_collision.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["config"]["spec"]["name"], "intersection_collision");
}

#[test]
fn missing_spec_is_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["smpc", "--spec", "/nonexistent/spec.json", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--spec"));
}

fn short_spec(dir: &Path, edit: impl FnOnce(&mut Value)) -> String {
    let text = std::fs::read_to_string(specs_dir().join("overtaking_moderate.json")).unwrap();
    let mut spec: Value = serde_json::from_str(&text).unwrap();
    spec["steps"] = 4.into();
    edit(&mut spec);
    let path = dir.join("spec.json");
    std::fs::write(&path, spec.to_string()).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn analytic_smpc_repeats_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let spec = short_spec(dir.path(), |_| {});
    let csv = |sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = run(&["smpc", "--spec", &spec, "--backend", "analytic", "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read_to_string(out_dir.join("smpc_overtaking_moderate_analytic.csv")).unwrap()
    };
    let (a, b) = (csv("a"), csv("b"));
    assert_eq!(a, b);
    assert!(a.starts_with("t,x_e,y_e,theta_e,v_e,omega_e,lambda,poc,cost,status,x_o,y_o,theta_o\n"));
    assert_eq!(a.lines().count(), 5);
}

#[test]
fn unavoidable_collision_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let spec = short_spec(dir.path(), |s| {
        s["object"]["initial"]["x"] = 1.0.into();
        s["object"]["v"] = 0.0.into();
        s["steps"] = 1.into();
    });
    let out = run(&["smpc", "--spec", &spec, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json_lossy(&out)["infeasible_steps"], 1);
}

fn json_lossy(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn env_overrides_seed_and_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .args(["bench", "--circles", "1", "--mcs-samples", "100", "--evaluations", "20", "--batches", "2"])
        .env("CIRCPOC_SEED", "42")
        .env("CIRCPOC_OUT", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert!(csv.starts_with("method,count,init_seconds,eval_seconds\n"));
    assert_eq!(csv.lines().count(), 3);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("bench.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["config"]["seed"], 42);
}

#[test]
fn accuracy_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "accuracy",
        "--circles",
        "3",
        "--mcs-samples",
        "100",
        "--repetitions",
        "5",
        "--reference-samples",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    json(&out);
    let csv = std::fs::read_to_string(dir.path().join("accuracy.csv")).unwrap();
    assert!(csv.starts_with("level,sigma,method,count,value,std_dev\n"));
}

#[test]
fn shipped_specs_match_built_ins() {
    let dir = tempfile::tempdir().unwrap();
    json(&run(&["specs", "--out", dir.path().to_str().unwrap()]));
    for name in ["intersection_collision", "intersection_pass", "oncoming_pass", "overtaking_low", "overtaking_moderate", "overtaking_high"]
    {
        let file = format!("{name}.json");
        let fresh: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(&file)).unwrap()).unwrap();
        let shipped: Value = serde_json::from_str(&std::fs::read_to_string(specs_dir().join(&file)).unwrap()).unwrap();
        assert_eq!(fresh, shipped, "{name}");
    }
}
