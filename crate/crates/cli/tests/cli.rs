use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bc-debranges"));
    c.env_remove("BC_DEBRANGES_SEED");
    c
}

fn run_config(dir: &Path, config: &str) -> (Output, Option<Value>) {
    let path = dir.join("config.json");
    fs::write(&path, config).unwrap();
    let out_dir = dir.join("out");
    let output = bin().arg("--out-dir").arg(&out_dir).arg("run").arg(&path).output().unwrap();
    let report = fs::read_to_string(out_dir.join("report.json"))
        .ok()
        .map(|t| serde_json::from_str(&t).unwrap());
    (output, report)
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn discrete_hand_example() {
    let dir = tempfile::tempdir().unwrap();
    let (out, report) = run_config(
        dir.path(),
        r#"{"system": "discrete", "T": 2, "potential": [0.5], "outputs": ["response", "recover"]}"#,
    );
    assert_eq!(out.status.code(), Some(0));
    let report = report.unwrap();
    // u_{1,1} = 1, u_{1,2} = b_1, u_{1,3} = b_1^2 + 1 + b_2 - 1 with b_2 = 0
    assert_eq!(floats(&report["stages"]["response"]["r"]), vec![1.0, 0.5, 0.25]);
    let b = floats(&report["stages"]["recover"]["b"]);
    assert_eq!(b.len(), 1);
    assert!((b[0] - 0.5).abs() < 1e-14);
    assert_eq!(report["config"]["T"], 2.0);
    assert_eq!(report["status"], "ok");
    let csv = fs::read_to_string(dir.path().join("out/response.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("k,r"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn zero_potential_connecting_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let (out, report) = run_config(dir.path(), r#"{"system": "discrete", "potential": "zero", "outputs": ["connecting"]}"#);
    assert_eq!(out.status.code(), Some(0));
    let rows = report.unwrap()["stages"]["connecting"]["matrix"].clone();
    let rows = rows.as_array().unwrap();
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in floats(row).into_iter().enumerate() {
            assert_eq!(v, if i == j { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn zero_bridge_checks_pass_with_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let (out, report) = run_config(dir.path(), r#"{"system": "bridge", "potential": "zero", "grid_points": 51, "outputs": ["validate"]}"#);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let b = &report.unwrap()["stages"]["bridge"];
    for key in ["potential_map", "response_relation", "measure_relation", "isometry"] {
        assert_eq!(b[key]["pass"], true, "{key}");
    }
    assert_eq!(b["potential_map"]["max_error"], 0.0);
    assert_eq!(b["response_relation"]["max_error"], 0.0);
    assert_eq!(b["isometry"]["max_error"], 0.0);
    assert!(b["measure_relation"]["max_error"].as_f64().unwrap() < 1e-9);
}

#[test]
fn corrupted_response_exits_two_and_names_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let (out, report) = run_config(
        dir.path(),
        r#"{"system": "discrete", "T": 2, "response": [2, 0.5, 0.25], "outputs": ["connecting"]}"#,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("r_0 = 1"));
    let report = report.unwrap();
    assert_eq!(report["status"], "error");
    assert!(report["error"].as_str().unwrap().contains("r_0 = 1"));
}

#[test]
fn input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = bin().arg("run").arg(dir.path().join("absent.json")).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
    let (out, _) = run_config(dir.path(), r#"{"system": "wave", "T": 0}"#);
    assert_eq!(out.status.code(), Some(1));
    let (out, _) = run_config(dir.path(), "not json");
    assert_eq!(out.status.code(), Some(1));
    let (out, _) = run_config(dir.path(), r#"{"system": "bridge", "potential": [1, 1]}"#);
    assert_eq!(out.status.code(), Some(1), "q(0) != 0 is an input error");
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(1));
    let bad_filter = bin().arg("--out-dir").arg(dir.path()).args(["validate", "--filter", "nope"]).output().unwrap();
    assert_eq!(bad_filter.status.code(), Some(1));
    let bad_seed = bin()
        .env("BC_DEBRANGES_SEED", "minus one")
        .arg("--out-dir")
        .arg(dir.path())
        .args(["validate", "--filter", "measures"])
        .output()
        .unwrap();
    assert_eq!(bad_seed.status.code(), Some(1));
}

#[test]
fn run_is_deterministic() {
    let config = r#"{"system": "wave", "potential": "linear", "grid_points": 41, "outputs": ["response", "krein", "kernel", "hb"]}"#;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run_config(a.path(), config).0.status.code(), Some(0));
    assert_eq!(run_config(b.path(), config).0.status.code(), Some(0));
    for name in ["report.json", "response.csv", "krein.csv", "kernel.csv", "hb.csv"] {
        let x = fs::read(a.path().join("out").join(name)).unwrap();
        let y = fs::read(b.path().join("out").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn dirac_tables_have_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let (out, report) = run_config(
        dir.path(),
        r#"{"system": "dirac", "potential": "sin", "amplitude": 0.3, "grid_points": 21, "z_samples": [[1, 1]], "outputs": ["response", "connecting", "krein", "kernel", "hb"]}"#,
    );
    assert_eq!(out.status.code(), Some(0));
    let header = |name: &str| {
        fs::read_to_string(dir.path().join("out").join(name)).unwrap().lines().next().unwrap().to_string()
    };
    assert_eq!(header("response.csv"), "t,r_re,r_im");
    assert_eq!(header("connecting.csv"), "i,j,value_re,value_im");
    assert_eq!(header("krein.csv"), "z_re,z_im,s,j1_re,j1_im,j2_re,j2_im");
    assert_eq!(header("kernel.csv"), "z_re,z_im,xi_re,xi_im,value_re,value_im,direct_re,direct_im");
    assert_eq!(header("hb.csv"), "lambda_re,lambda_im,value_re,value_im");
    let report = report.unwrap();
    assert_eq!(report["stages"]["hb"]["check"]["pass"], true);
    let z = floats(&report["stages"]["kernel"][0]["z"]);
    assert_eq!(z, vec![1.0, 1.0]);
}

#[test]
fn validate_is_byte_identical_and_seedable() {
    let dir = tempfile::tempdir().unwrap();
    let read = |sub: &str, seed: Option<&str>| {
        let out_dir = dir.path().join(sub);
        let mut cmd = bin();
        if let Some(s) = seed {
            cmd.env("BC_DEBRANGES_SEED", s);
        }
        let out = cmd.arg("--out-dir").arg(&out_dir).args(["validate", "--filter", "discrete"]).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
        assert!(String::from_utf8_lossy(&out.stdout).contains("[PASS] criterion  6"));
        fs::read(out_dir.join("validation.json")).unwrap()
    };
    let a = read("a", None);
    let b = read("b", None);
    assert_eq!(a, b);
    let c = read("c", Some("7"));
    assert_ne!(a, c);
}
