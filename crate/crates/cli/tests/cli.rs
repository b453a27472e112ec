use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn spinlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinlab"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", stderr(o));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn simulate_writes_trajectory_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let o = spinlab(dir.path(), &["simulate", "lagrange_homothetic_collision", "-o", "h.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("h.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("t,"), "{}", header);
    assert!(csv.lines().count() > 10);
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("h.csv.json")).unwrap()).unwrap();
    assert_eq!(meta["cluster"], json!([1, 2, 3]));
    assert_eq!(meta["stop_reason"], json!("collision-approach"));
}

#[test]
fn transform_then_spin() {
    let dir = tempfile::tempdir().unwrap();
    assert!(spinlab(dir.path(), &["simulate", "binary_plus_spectator_collision", "-o", "b.csv"]).status.success());
    let o = spinlab(dir.path(), &["transform", "b.csv", "-o", "bu.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let header = std::fs::read_to_string(dir.path().join("bu.csv")).unwrap().lines().next().unwrap().to_string();
    assert!(header.starts_with("tau,t,r,v,"), "{}", header);
    let sp = stdout_json(&spinlab(dir.path(), &["spin", "bu.csv"]));
    assert_eq!(sp["tail_cauchy"], json!(true));
    assert!(sp["tail_variation"].as_f64().unwrap() < 1e-3);
}

#[test]
fn rates_recovers_a_synthetic_power_law() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("t,y\n");
    for i in 0..200 {
        let t = 10f64.powf(i as f64 / 50.0);
        text.push_str(&format!("{:e},{:e}\n", t, 2.5 * t.powf(-5.0 / 3.0)));
    }
    write(dir.path(), "p.csv", &text);
    let fits = stdout_json(&spinlab(dir.path(), &["rates", "p.csv"]));
    let slope = fits[0]["slope"].as_f64().unwrap();
    assert!((slope + 5.0 / 3.0).abs() < 1e-6, "{}", slope);
}

#[test]
fn cc_find_and_classify() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "g.json",
        r#"{"masses": [1, 1, 1], "positions": [[1.05, 0.0], [-0.5, 0.85], [-0.45, -0.9]]}"#,
    );
    let o = spinlab(dir.path(), &["cc", "find", "g.json", "-o", "cc.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("cc.json")).unwrap()).unwrap();
    assert!((cc["lambda"].as_f64().unwrap() - 3.0).abs() < 1e-10);
    let eq = stdout_json(&spinlab(dir.path(), &["cc", "classify", "cc.json", "--variant", "collision"]));
    assert!((eq["v0"].as_f64().unwrap() + 6f64.sqrt()).abs() < 1e-10);
}

#[test]
fn report_round_trips_through_validate() {
    let dir = tempfile::tempdir().unwrap();
    let o = spinlab(dir.path(), &["report", "lagrange_homothetic_collision", "-o", "r.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = spinlab(dir.path(), &["validate", "r.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("valid"));
}

#[test]
fn empty_cluster_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "s.json",
        r#"{"masses": [1, 1], "positions": [[-0.5, 0], [0.5, 0]], "velocities": [[0, -0.5], [0, 0.5]],
            "cluster": [], "mode": "generic", "stop": {"t_end": 1.0},
            "tolerances": {"rtol": 1e-10, "atol": 1e-12}}"#,
    );
    let o = spinlab(dir.path(), &["report", "s.json"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("validate"), "{}", stderr(&o));
}

#[test]
fn malformed_csv_names_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.csv", "t,y\n1,2\n2,abc\n");
    let o = spinlab(dir.path(), &["rates", "bad.csv"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("line 3") && e.contains("`y`"), "{}", e);
}

#[test]
fn unknown_scenario_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.json", r#"{"masses": [1, 1], "colour": "red"}"#);
    let o = spinlab(dir.path(), &["simulate", "s.json", "-o", "x.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn shadow_problem_file() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "p.json",
        r#"{"masses": [1, 1, 1], "positions": [[1, 0], [-0.5, 0.866], [-0.5, -0.866]],
            "variant": "collision", "forcing": {"scenario": "binary_plus_spectator_collision"},
            "horizon": 6.0}"#,
    );
    let r = stdout_json(&spinlab(dir.path(), &["shadow", "p.json"]));
    assert!(r["kappa"].as_f64().unwrap() < 1.0);
    assert!(r["membership_residual"].as_f64().unwrap() < 1e-6);
}

#[test]
fn bad_arguments_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(spinlab(dir.path(), &["simulate"]).status.code(), Some(2));
    assert_eq!(spinlab(dir.path(), &["simulate", "no_such_thing", "-o", "x.csv"]).status.code(), Some(2));
}
