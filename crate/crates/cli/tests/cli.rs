use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jumplq::fixtures;
use jumplq::io::save_spec;
use jumplq::problem::CoefficientPath;
use jumplq::{Matrix, ProblemSpec};

fn write_problem(dir: &Path, name: &str, spec: &ProblemSpec) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, save_spec(spec).unwrap()).unwrap();
    path
}

fn jumplq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jumplq")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_row(path: &Path, k: usize) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    let line = text.lines().nth(k + 1).unwrap();
    line.split(',').map(|s| s.parse().unwrap()).collect()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write_problem(dir.path(), "ok.json", &ProblemSpec::zeros(1, 1, jumplq::TimeGrid::new(0.0, 1.0, 10)));
    let o = jumplq(&["validate", "--problem", ok.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), "OK n=1 m=1 K=0");

    let mut bad = ProblemSpec::zeros(2, 2, jumplq::TimeGrid::new(0.0, 1.0, 10));
    bad.R = CoefficientPath::Constant(Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]));
    let text = save_spec(&bad).unwrap();
    let bad_path = dir.path().join("bad.json");
    std::fs::write(&bad_path, text).unwrap();
    let o = jumplq(&["validate", "--problem", bad_path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains('R'));

    let junk = dir.path().join("junk.json");
    std::fs::write(&junk, "{ \"n\": 1, ").unwrap();
    assert_eq!(code(&jumplq(&["validate", "--problem", junk.to_str().unwrap()])), 3);
}

#[test]
fn solve_writes_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_problem(dir.path(), "q.json", &fixtures::riccati_quadratic(1000));
    let out = dir.path().join("out");
    let o = jumplq(&["solve", "--problem", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let row = csv_row(&out.join("P.csv"), 0);
    assert_eq!(row[0], 0.0);
    assert!((row[2] - 0.5).abs() <= 1e-8);
    for f in ["Theta.csv", "eta.csv", "v.csv", "solve.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("solve.json")).unwrap()).unwrap();
    assert_eq!(summary["all_certificates_pass"], true);
    assert!((summary["P_t0"][0][0].as_f64().unwrap() - 0.5).abs() <= 1e-8);

    let p = write_problem(dir.path(), "j.json", &fixtures::pure_jump(1000));
    let o = jumplq(&["solve", "--problem", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!((csv_row(&out.join("P.csv"), 0)[2] - 1f64.exp()).abs() <= 1e-8);
}

#[test]
fn unsolvable_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_problem(dir.path(), "neg.json", &fixtures::negative_control_weight(100));
    for cmd in ["solve", "verify", "value", "simulate"] {
        let o = jumplq(&[cmd, "--problem", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        assert_eq!(code(&o), 4, "{cmd}");
        let err: serde_json::Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
        assert_eq!(err["reason"], "PSD");
        assert_eq!(err["time"], 1.0);
    }
}

#[test]
fn value_examples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let p = write_problem(dir.path(), "q.json", &fixtures::riccati_quadratic(1000));
    let o = jumplq(&["value", "--problem", p.to_str().unwrap(), "--x", "1", "--out", out]);
    assert_eq!(stdout(&o).trim(), "0.500000000000");
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("value.json")).unwrap()).unwrap();
    assert_eq!(rep["linear"], 0.0);

    let p = write_problem(dir.path(), "g.json", &fixtures::terminal_linear(50, 3.0, 0.0));
    let o = jumplq(&["value", "--problem", p.to_str().unwrap(), "--x", "2", "--out", out]);
    assert_eq!(stdout(&o).trim(), "12.0000000000");

    let o = jumplq(&["value", "--problem", p.to_str().unwrap(), "--x", "1,2", "--out", out]);
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_zero_dynamics_and_martingale() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ProblemSpec::zeros(2, 1, jumplq::TimeGrid::new(0.0, 1.0, 20));
    spec.x0 = jumplq::Vector::from_vec(vec![1.5, -2.0]);
    let p = write_problem(dir.path(), "z.json", &spec);
    let out = dir.path().join("z");
    let o = jumplq(&["simulate", "--problem", p.to_str().unwrap(), "--paths", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(out.join("trajectories.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "path,k,t,X_0,X_1,u_0");
    for l in lines {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!((f[3], f[4]), ("1.5", "-2"));
    }
    assert_eq!(std::fs::read_to_string(out.join("costs.csv")).unwrap().lines().count(), 11);

    let p = write_problem(dir.path(), "m.json", &fixtures::pure_jump(200));
    let o = jumplq(&["simulate", "--problem", p.to_str().unwrap(), "--out", out.to_str().unwrap(), "--trajectories", "3"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("within 3 SE of x0: yes"), "{}", stdout(&o));
}

#[test]
fn simulate_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_problem(dir.path(), "r.json", &fixtures::random_problem(3, 2, 1, 2, 50, true));
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let o = jumplq(&["simulate", "--problem", p.to_str().unwrap(), "--paths", "300", "--seed", "9", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        (std::fs::read(out.join("trajectories.csv")).unwrap(), std::fs::read(out.join("costs.csv")).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn verify_passes_and_rejects_corrupted_gain() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_problem(dir.path(), "s.json", &fixtures::inhomogeneous_scalar(200));
    let out = dir.path().join("v");
    let args = |extra: &[&str]| {
        let mut a = vec!["verify", "--problem", p.to_str().unwrap(), "--paths", "2000", "--out", out.to_str().unwrap()];
        a.extend_from_slice(extra);
        a.into_iter().map(String::from).collect::<Vec<_>>()
    };
    let o = Command::new(env!("CARGO_BIN_EXE_jumplq")).args(args(&[])).output().unwrap();
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(rep["environment"]["paths"], 2000);
    assert!(rep["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));

    // Theta = 0 in place of the optimal gain.
    let theta = dir.path().join("Theta.csv");
    let mut text = String::from("k,t,Theta_0_0\n");
    for k in 0..=200 {
        text.push_str(&format!("{k},{},0\n", k as f64 / 200.0));
    }
    std::fs::write(&theta, text).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_jumplq"))
        .args(args(&["--theta", theta.to_str().unwrap()]))
        .output()
        .unwrap();
    assert_eq!(code(&o), 6);
    assert!(String::from_utf8_lossy(&o.stderr).contains("stationarity_residual"));
}

#[test]
fn steps_override_refines_grid() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_problem(dir.path(), "q.json", &fixtures::riccati_quadratic(10));
    let out = dir.path().join("o");
    let o = jumplq(&["solve", "--problem", p.to_str().unwrap(), "--steps", "1000", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(out.join("P.csv")).unwrap();
    assert_eq!(text.lines().count(), 1002);
}
