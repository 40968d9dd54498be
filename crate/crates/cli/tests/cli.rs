use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const THETA_PI_6: &str = "0.5235987755982988";
const THETA_PI_3: &str = "1.0471975511965976";

fn steering(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_steering")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn gen(dir: &Path, name: &str, args: &[&str]) -> String {
    let p = path(dir, name);
    let p = p.to_str().unwrap().to_string();
    let mut full = vec!["gen"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["--out", &p]);
    let out = steering(&full);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    p
}

#[test]
fn singlet_is_steerable_with_unit_weight() {
    let dir = tempfile::tempdir().unwrap();
    let f = gen(dir.path(), "s.json", &["--kind", "singlet-xz"]);
    let out = steering(&["is-lhs", &f]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout_json(&out)["margin"].as_f64().unwrap() > 0.99);

    let prefix = path(dir.path(), "w");
    let out = steering(&["measure", "--weight", "--witness-prefix", prefix.to_str().unwrap(), &f]);
    assert_eq!(out.status.code(), Some(0));
    let report = stdout_json(&out);
    assert!((report["weight"]["value"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!(report.get("robustness").is_none());
    let witness: Value = serde_json::from_str(&std::fs::read_to_string(path(dir.path(), "w.weight.json")).unwrap()).unwrap();
    assert_eq!(witness["kind"], "weight");
}

#[test]
fn random_lhs_fixture_is_a_member() {
    let dir = tempfile::tempdir().unwrap();
    let f = gen(dir.path(), "l.json", &["--kind", "random-lhs", "--seed", "7"]);
    let out = steering(&["is-lhs", &f, "--tol", "1e-6"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["is_member"], true);
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a.json", &["--kind", "random-steerable", "--seed", "3"]);
    let b = gen(dir.path(), "b.json", &["--kind", "random-steerable", "--seed", "3"]);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn convert_check_and_apply_witness() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a.json", &["--theta", THETA_PI_6]);
    let b = gen(dir.path(), "b.json", &["--theta", THETA_PI_3]);
    let w = path(dir.path(), "w.json");
    let w = w.to_str().unwrap();

    let out = steering(&["convert-check", &a, &a, "--emit-witness", w]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["reason"], "overlaps-match");

    let img = path(dir.path(), "img.json");
    let out = steering(&["apply", "--snio", w, "--in", &a, "--out", img.to_str().unwrap()]);
    assert!(out.status.success());
    let inspect = stdout_json(&steering(&["inspect", img.to_str().unwrap()]));
    assert_eq!(inspect["type"], "assemblage");
    assert!((inspect["trace"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let out = steering(&["convert-check", &a, &b]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["reason"], "overlap-mismatch");
}

#[test]
fn bit_search_identity_case() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a.json", &["--theta", THETA_PI_6]);
    let out = steering(&["bit-search", "--candidate", &a, "--thetas", THETA_PI_6, "--restarts", "1"]);
    assert!(out.status.success());
    let report = stdout_json(&out);
    assert!(report["entries"][0]["residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(steering(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(steering(&["inspect", "/definitely/missing.json"]).status.code(), Some(2));
    assert_eq!(steering(&["gen", "--kind", "theta", "--out", "/tmp/unused.json"]).status.code(), Some(2));
    assert_eq!(steering(&["suite", "--only", "bogus"]).status.code(), Some(2));
}

#[test]
fn suite_report_dumps_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let report = path(dir.path(), "report.json");
    let out = steering(&["suite", "--trials", "2", "--only", "sdp,decomposition", "--report", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let parsed: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed["passed"], true);
    assert_eq!(parsed["suites"].as_array().unwrap().len(), 2);

    let out = steering(&["suite", "--trials", "0"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["passed"], true);

    // An unattainable tolerance forces failures, which are dumped and replay.
    let config = path(dir.path(), "config.json");
    std::fs::write(&config, r#"{"seed": 9, "trials": 2, "suites": ["decomposition"], "tolerances": {"decomposition": -1.0}}"#).unwrap();
    let dumps = path(dir.path(), "dumps");
    let out = steering(&["suite", "--config", config.to_str().unwrap(), "--dump-dir", dumps.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let dump = dumps.join("decomposition-0.json");
    let out = steering(&["suite", "--replay", dump.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["reproduced"], true);
}

#[test]
fn thread_cap_does_not_change_reports() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_steering"))
            .args(["suite", "--trials", "3", "--only", "lhs-closure"])
            .env("STEERING_THREADS", threads)
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run("1"), run("4"));
}
