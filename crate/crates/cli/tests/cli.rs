use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn driftstop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_driftstop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

fn run(cmd: &str, config: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    driftstop(&args)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(str::to_owned).collect()];
    for rec in r.records() {
        rows.push(rec.unwrap().iter().map(str::to_owned).collect());
    }
    rows
}

const BERNOULLI: &str = r#"{
  "prior": {"kind": "discrete_atoms", "atoms": [{"point": -1, "weight": 0.5}, {"point": 1, "weight": 0.5}]},
  "cost_c": 0.25,
  "solver": {"n_t": 60, "n_x": 121},
  "sim": {"n_paths": 4000, "dt": 0.02, "export_paths": 5}
}"#;

const GAUSSIAN: &str = r#"{
  "prior": {"kind": "gaussian", "m": 0, "sigma2": 1},
  "cost_c": 0.25,
  "solver": {"n_t": 40, "n_x": 41},
  "sim": {"n_paths": 4000, "dt": 0.02}
}"#;

#[test]
fn gaussian_psi_is_flat_in_x() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), GAUSSIAN);
    let out = run("psi", &cfg, dir.path(), &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = csv_rows(&dir.path().join("psi_grid.csv"));
    for row in &rows[1..] {
        let t: f64 = row[0].parse().unwrap();
        let expected = 1.0 / (1.0 + t);
        for cell in &row[1..] {
            let v: f64 = cell.parse().unwrap();
            assert!((v - expected).abs() < 1e-9, "t={t}: {v} vs {expected}");
        }
    }
    assert!(dir.path().join("pde_residuals.csv").exists());
    assert!(dir.path().join("resolved_config.json").exists());
}

#[test]
fn bernoulli_psi_at_zero_is_one_minus_x_squared() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), BERNOULLI);
    let out = run("psi", &cfg, dir.path(), &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = csv_rows(&dir.path().join("psi_grid.csv"));
    let xs: Vec<f64> = rows[0][1..].iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(rows[1][0].parse::<f64>().unwrap(), 0.0);
    for (x, cell) in xs.iter().zip(&rows[1][1..]) {
        let v: f64 = cell.parse().unwrap();
        let expected = (1.0 - x * x).max(0.0);
        assert!((v - expected).abs() < 1e-9, "x={x}: {v} vs {expected}");
    }
}

#[test]
fn unknown_key_is_named() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"prior": {"kind": "gaussian", "m": 0, "sigma2": 1}, "cost_c": 1, "solver": {"nx": 3}}"#,
    );
    let out = run("solve", &cfg, dir.path(), &[]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("solver.nx"), "{}", stderr(&out));
}

#[test]
fn malformed_json_and_bad_values_exit_2() {
    let dir = TempDir::new().unwrap();
    for body in [
        "{not json",
        r#"{"prior": {"kind": "gaussian", "m": 0, "sigma2": 1}, "cost_c": -1}"#,
        r#"{"prior": {"kind": "gaussian", "m": 0, "sigma2": -1}, "cost_c": 1}"#,
        r#"{"prior": {"kind": "weibull"}, "cost_c": 1}"#,
    ] {
        let cfg = write_config(dir.path(), body);
        let out = run("psi", &cfg, dir.path(), &[]);
        assert_eq!(code(&out), 2, "{body}: {}", stderr(&out));
        assert!(stderr(&out).starts_with("error:"));
    }
    let out = driftstop(&["psi", "--config", "/nonexistent/config.json", "--out", "x"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_output_dir_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), GAUSSIAN);
    let out = driftstop(&["psi", "--config", &cfg]);
    assert_eq!(code(&out), 2);
}

#[test]
fn bernoulli_solve_and_verify() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), BERNOULLI);
    let out = run("solve", &cfg, dir.path(), &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in [
        "value_grid.csv",
        "boundary.csv",
        "solver_metadata.json",
        "monotonicity_report.json",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let report = read_json(&dir.path().join("monotonicity_report.json"));
    assert_eq!(report["pass"], true);
    assert_eq!(report["shape"], "two_sided_symmetric");

    let out = run("verify", &cfg, dir.path(), &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = read_json(&dir.path().join("verify.json"));
    assert_eq!(v["pass"], true);
    assert_eq!(v["policy"], "boundary");
    assert_eq!(v["variance_identity"]["pass"], true);
}

#[test]
fn verify_without_boundary_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), BERNOULLI);
    let out = run("verify", &cfg, dir.path(), &[]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("boundary.csv"));
}

#[test]
fn verify_closed_form_and_stop_at_zero() {
    let dir = TempDir::new().unwrap();
    for policy in [r#""closed_form""#, r#""stop_at_zero""#] {
        let body = GAUSSIAN.replacen(
            "\"cost_c\"",
            &format!("\"verify\": {{\"policy\": {policy}}}, \"cost_c\""),
            1,
        );
        let cfg = write_config(dir.path(), &body);
        let out = run("verify", &cfg, dir.path(), &[]);
        assert_eq!(code(&out), 0, "{policy}: {}", stderr(&out));
        let v = read_json(&dir.path().join("verify.json"));
        assert_eq!(v["pass"], true, "{policy}");
        assert_eq!(v["reference"]["within_3se"], true, "{policy}");
    }
}

#[test]
fn gaussian_unit_cost_stops_everywhere() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"prior": {"kind": "gaussian", "m": 0, "sigma2": 1}, "cost_c": 1, "solver": {"n_t": 20, "n_x": 21}}"#,
    );
    let out = run("solve", &cfg, dir.path(), &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = read_json(&dir.path().join("monotonicity_report.json"));
    assert_eq!(report["shape"], "all_stop");
}

#[test]
fn mixture_boundary_is_symmetric_and_shrinks() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"prior": {"kind": "symmetric_gaussian_mixture", "m": 1, "sigma": 1}, "cost_c": 0.04,
            "solver": {"n_t": 80, "n_x": 81}}"#,
    );
    let out = run("solve", &cfg, dir.path(), &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = csv_rows(&dir.path().join("boundary.csv"));
    let header = &rows[0];
    let b_col = header.iter().position(|h| h == "b").unwrap();
    let shape_col = header.iter().position(|h| h == "shape").unwrap();
    let mut prev = f64::INFINITY;
    for row in &rows[1..] {
        let shape = &row[shape_col];
        assert!(
            shape == "two_sided_symmetric" || shape == "all_stop",
            "{shape}"
        );
        let b: f64 = row[b_col].parse().unwrap();
        assert!(b <= prev + 1e-12, "b increased: {prev} -> {b}");
        prev = b;
    }
}

#[test]
fn closed_form_outputs() {
    let out = driftstop(&["closed-form", "bernoulli", "--beta", "1", "--c", "1"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["boundary"].is_null());
    assert_eq!(v["trivial_stop"], true);

    let out = driftstop(&["closed-form", "bernoulli", "--beta", "1", "--c", "0.25"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let a = v["boundary"].as_f64().unwrap();
    assert!((a - 0.917_040_679_229_183_6).abs() < 1e-9, "{a}");

    let out = driftstop(&["closed-form", "gaussian", "--sigma2", "1", "--c", "0.25"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["tau_star"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let out = driftstop(&[
        "closed-form",
        "mixture",
        "--m",
        "1",
        "--sigma",
        "1",
        "--c",
        "0.04",
    ]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["t_infinity"].as_f64().unwrap() - 4.0).abs() < 1e-9);
    assert!((v["t_zero"].as_f64().unwrap() - 4.854_101_966_249_685).abs() < 1e-9);

    let out = driftstop(&["closed-form", "half_normal", "--c", "0.1"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["psi_monotone"].is_array());
}

#[test]
fn closed_form_rejects_bad_input() {
    assert_eq!(code(&driftstop(&["closed-form", "weibull", "--c", "1"])), 2);
    assert_eq!(
        code(&driftstop(&["closed-form", "gaussian", "--c", "-1"])),
        2
    );
    assert_eq!(code(&driftstop(&["closed-form", "gaussian"])), 2);
}

#[test]
fn runs_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for dir in [&a, &b] {
        let cfg = write_config(dir.path(), BERNOULLI);
        for cmd in ["solve", "simulate"] {
            let out = run(cmd, &cfg, dir.path(), &[]);
            assert_eq!(code(&out), 0, "{cmd}: {}", stderr(&out));
        }
    }
    for f in ["value_grid.csv", "boundary.csv", "paths.csv", "monitor.csv"] {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), BERNOULLI);
    let one = dir.path().join("one");
    let two = dir.path().join("two");
    assert_eq!(code(&run("simulate", &cfg, &one, &["--seed", "7"])), 0);
    assert_eq!(code(&run("simulate", &cfg, &two, &["--seed", "8"])), 0);
    let resolved = read_json(&one.join("resolved_config.json"));
    assert_eq!(resolved["sim"]["seed"], 7);
    assert_ne!(
        fs::read(one.join("paths.csv")).unwrap(),
        fs::read(two.join("paths.csv")).unwrap()
    );
}

#[test]
fn simulate_writes_monitors() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), BERNOULLI);
    let out = run("simulate", &cfg, dir.path(), &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let s = read_json(&dir.path().join("simulate_summary.json"));
    assert_eq!(s["martingale_within_3se"], true);
    assert_eq!(s["supermartingale_bound"], true);
    assert_eq!(s["exported_paths"], 5);
    let paths = csv_rows(&dir.path().join("paths.csv"));
    assert_eq!(paths[0], ["path", "x_true", "t", "y", "x_hat", "psi"]);
    let ids: std::collections::BTreeSet<&str> = paths[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(ids.len(), 5);
    let monitor = csv_rows(&dir.path().join("monitor.csv"));
    assert_eq!(monitor[0][0], "t");
}

#[test]
fn thread_count_does_not_change_output() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let cfg = write_config(dir.path(), BERNOULLI);
        let out = Command::new(env!("CARGO_BIN_EXE_driftstop"))
            .args([
                "simulate",
                "--config",
                &cfg,
                "--out",
                dir.path().to_str().unwrap(),
            ])
            .env("DRIFTSTOP_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    assert_eq!(
        fs::read(a.path().join("monitor.csv")).unwrap(),
        fs::read(b.path().join("monitor.csv")).unwrap()
    );
}
