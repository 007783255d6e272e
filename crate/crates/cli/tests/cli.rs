use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn med(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_med"))
        .args(args)
        .current_dir(dir)
        .env_remove("MED_LOG")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, value: &Value) {
    fs::write(dir.join(name), serde_json::to_string(value).unwrap()).unwrap();
}

fn pair_gram(overlap: f64) -> Value {
    json!({"m": 2, "gram_re": [[0.5, 0.5 * overlap], [0.5 * overlap, 0.5]]})
}

#[test]
fn generate_solve_certify_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&med(&["generate", "--m", "3", "--seed", "1", "--out", "gen"], d)), 0);
    assert_eq!(code(&med(&["solve", "gen/ensemble.json", "--out", "run"], d)), 0);
    let csv = fs::read_to_string(d.join("run/residuals.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1001);
    let out = med(&["certify", "run/report.json"], d);
    assert_eq!(code(&out), 0);
    let cert: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cert["verdict"], "optimal");
}

#[test]
fn pair_reaches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "pair.json", &pair_gram(0.6));
    let out = med(&["solve", "pair.json"], dir.path());
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((report["p_success"].as_f64().unwrap() - 0.9).abs() < 1e-9);
}

#[test]
fn output_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    med(&["generate", "--m", "4", "--seed", "9", "--out", "gen"], d);
    let a = med(&["solve", "gen/ensemble.json"], d);
    let b = med(&["solve", "gen/ensemble.json"], d);
    assert_eq!(a.stdout, b.stdout);
    let g1 = med(&["generate", "--m", "3", "--seed", "2"], d);
    let g2 = med(&["generate", "--m", "3", "--seed", "2"], d);
    assert_eq!(g1.stdout, g2.stdout);
}

#[test]
fn malformed_json_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"gram_re": [[1.0]]}"#).unwrap();
    let out = med(&["solve", "bad.json"], dir.path());
    assert_eq!(code(&out), 64);
    assert!(String::from_utf8_lossy(&out.stderr).contains("`m`"));

    write(dir.path(), "short.json", &json!({"m": 2, "gram_re": [[0.5, 0.1]]}));
    let out = med(&["solve", "short.json"], dir.path());
    assert_eq!(code(&out), 64);
    assert!(String::from_utf8_lossy(&out.stderr).contains("gram_re"));
}

#[test]
fn near_dependent_input_is_invalid_data() {
    let dir = tempfile::tempdir().unwrap();
    let eps = 2e-10;
    let off = 0.5 - eps;
    write(dir.path(), "dep.json", &json!({"m": 2, "gram_re": [[0.5, off], [off, 0.5]]}));
    let out = med(&["solve", "dep.json"], dir.path());
    assert_eq!(code(&out), 65);
    assert!(String::from_utf8_lossy(&out.stderr).contains("linear-independence"));
}

#[test]
fn missing_input_and_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&med(&["solve", "absent.json"], dir.path())), 66);
    assert_eq!(code(&med(&["solve"], dir.path())), 64);
    assert_eq!(code(&med(&["no-such-command"], dir.path())), 64);
    write(dir.path(), "pair.json", &pair_gram(0.6));
    assert_eq!(code(&med(&["solve", "pair.json", "--steps", "500", "--h", "1e-3"], dir.path())), 64);
    assert_eq!(code(&med(&["--help"], dir.path())), 0);
}

#[test]
fn certify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let eye = json!([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    write(d, "orth.json", &json!({"m": 3, "probs": [0.4, 0.35, 0.25], "states_re": eye}));
    write(d, "basis.json", &json!({"m": 3, "basis_re": eye, "frame": "ambient"}));
    assert_eq!(code(&med(&["certify", "orth.json", "basis.json"], d)), 0);

    // the optimal pair measurement with its outcomes swapped
    write(d, "pair.json", &pair_gram(0.6));
    let report: Value = serde_json::from_slice(&med(&["solve", "pair.json"], d).stdout).unwrap();
    let mut povm = report["final_povm"].clone();
    for part in ["basis_re", "basis_im"] {
        for row in povm[part].as_array_mut().unwrap() {
            row.as_array_mut().unwrap().swap(0, 1);
        }
    }
    write(d, "swapped.json", &povm);
    assert_eq!(code(&med(&["certify", "pair.json", "swapped.json"], d)), 2);

    med(&["generate", "--m", "3", "--seed", "4", "--out", "gen"], d);
    assert_eq!(code(&med(&["certify", "gen/ensemble.json", "basis.json"], d)), 3);
}

#[test]
fn enumerate_identity() {
    let dir = tempfile::tempdir().unwrap();
    let third = 1.0 / 3.0;
    write(
        dir.path(),
        "id.json",
        &json!({"m": 3, "gram_re": [[third, 0.0, 0.0], [0.0, third, 0.0], [0.0, 0.0, third]]}),
    );
    let out = med(&["enumerate", "id.json"], dir.path());
    assert_eq!(code(&out), 0);
    let land: Value = serde_json::from_slice(&out.stdout).unwrap();
    let entries = land["entries"].as_array().unwrap();
    let real = entries.iter().filter(|e| e["root"]["is_real"] == true).count();
    let pd = entries.iter().filter(|e| e["root"]["is_positive_definite"] == true).count();
    assert_eq!((real, pd), (5, 1));
    assert_eq!(land["global"], 0);

    med(&["generate", "--m", "3", "--seed", "1", "--out", "c"], dir.path());
    assert_eq!(code(&med(&["enumerate", "c/ensemble.json"], dir.path())), 65);
}

#[test]
fn audit_solves_when_no_povm_given() {
    let dir = tempfile::tempdir().unwrap();
    med(&["generate", "--m", "3", "--seed", "5", "--out", "gen"], dir.path());
    let out = med(&["audit", "gen/ensemble.json"], dir.path());
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["failures"].as_array().unwrap().is_empty());
}

#[test]
fn reproduce_fig1_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = med(&["reproduce-fig1", "--out", "fig"], dir.path());
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(dir.path().join("fig/fig1_residuals.csv")).unwrap();
    let rows: Vec<_> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1000);
    let last: f64 = rows[999].split(',').nth(2).unwrap().parse().unwrap();
    assert!((-17.0..=-15.0).contains(&last));
}

#[test]
fn batch_writes_one_report_per_input() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::create_dir(d.join("in")).unwrap();
    write(&d.join("in"), "a.json", &pair_gram(0.3));
    write(&d.join("in"), "b.json", &pair_gram(0.7));
    assert_eq!(code(&med(&["solve", "--batch", "in", "--out", "out"], d)), 0);
    for stem in ["a", "b"] {
        assert!(d.join(format!("out/{stem}.report.json")).exists());
        assert!(d.join(format!("out/{stem}.residuals.csv")).exists());
    }
}

#[test]
fn chained_solve_from_intermediate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    med(&["generate", "--m", "3", "--seed", "6", "--gram", "--out", "a"], d);
    med(&["generate", "--m", "3", "--seed", "7", "--out", "b"], d);
    let direct: Value = serde_json::from_slice(&med(&["solve", "b/ensemble.json"], d).stdout).unwrap();
    let out = med(&["solve", "b/ensemble.json", "--from", "a/ensemble.json"], d);
    assert_eq!(code(&out), 0);
    let chained: Value = serde_json::from_slice(&out.stdout).unwrap();
    let diff = direct["p_success"].as_f64().unwrap() - chained["p_success"].as_f64().unwrap();
    assert!(diff.abs() < 1e-8);
}

#[test]
fn logging_stays_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "pair.json", &pair_gram(0.6));
    let out = Command::new(env!("CARGO_BIN_EXE_med"))
        .args(["solve", "pair.json"])
        .current_dir(dir.path())
        .env("MED_LOG", "debug")
        .output()
        .unwrap();
    assert!(!out.stderr.is_empty());
    serde_json::from_slice::<Value>(&out.stdout).expect("stdout is pure JSON");
}
