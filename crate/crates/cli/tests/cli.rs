use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bubbletower"))
        .args(args)
        .env("BUBBLETOWER_OUT", out)
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn constants_table_matches_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["constants", "--n", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&dir.path().join("constants.csv"));
    assert_eq!(rows[0], ["quantity", "value", "closed_form", "error_estimate"]);
    for r in &rows[1..] {
        if r[2].is_empty() {
            continue;
        }
        let (v, c): (f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap());
        assert!((v - c).abs() <= 1e-8 * c.abs(), "{r:?}");
    }
    let a4: f64 = rows.iter().find(|r| r[0] == "a4").unwrap()[1].parse().unwrap();
    assert!((a4 - 1.06841601708076).abs() < 1e-10);
}

#[test]
fn manifest_hashes_match_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(dir.path(), &["reduce", "--n", "3", "--k", "2"]).status.success());
    let m = json(&dir.path().join("manifest.json"));
    let files = m["files"].as_array().unwrap();
    assert_eq!(files.len(), 3);
    for f in files {
        let bytes = std::fs::read(dir.path().join(f["name"].as_str().unwrap())).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), f["sha256"].as_str().unwrap());
    }
    assert_eq!(m["config"]["k"], "2");
    let r = json(&dir.path().join("reduce.json"));
    let s = r["state"]["s"].as_array().unwrap();
    assert!((s[0].as_f64().unwrap() - 0.7406801701108).abs() < 1e-9);
    assert!((s[1].as_f64().unwrap() - 0.04263930762004).abs() < 1e-9);
    assert!(r["fd_jacobian_singular_values"].as_array().unwrap().iter().all(|v| v.as_f64().unwrap() > 0.0));
}

#[test]
fn sweep_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["sweep", "--n", "3", "--k", "2", "--eps", "0.02:0.005:geometric"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&dir.path().join("sweep.csv"));
    assert_eq!(
        rows[0],
        ["eps", "converged", "newton_iters", "residual", "mu_1", "mu_2", "d_1", "d_2", "nodal_radius_1"]
    );
    assert_eq!(rows.len(), 4);
    for r in &rows[1..] {
        assert_eq!(r[1], "true");
        let (mu1, mu2, z): (f64, f64, f64) = (r[4].parse().unwrap(), r[5].parse().unwrap(), r[8].parse().unwrap());
        assert!(mu2 < z && z < mu1);
    }
    assert!(!dir.path().join("error.json").exists());
}

#[test]
fn numerical_failure_exits_2_with_record() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["solve", "--n", "3", "--eps", "0.05,0.01", "--solve.max_total", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let e = json(&dir.path().join("error.json"));
    assert_eq!(e["exit_code"], 2);
    assert_eq!(e["failures"].as_array().unwrap().len(), 2);
    let rows = csv_rows(&dir.path().join("solve.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1][1], "false");
    // a later successful run clears the record
    assert!(run(dir.path(), &["solve", "--n", "3", "--eps", "0.05"]).status.success());
    assert!(!dir.path().join("error.json").exists());
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["sweep", "--eps", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("(0, 1)"));
    let o = run(dir.path(), &["constants", "--n", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n >= 3"));
    let o = run(dir.path(), &["ansatz", "--domain.radius", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&dir.path().join("error.json"))["kind"], "unsupported");
}

#[test]
fn config_file_and_print_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# tower\ncmd = sweep\nn = 3\nk = 2\neps = 0.1:0.0125:geometric\ngrid.per_decade = 30\n").unwrap();
    let o = run(dir.path(), &["sweep", "--config", cfg.to_str().unwrap(), "--k", "1", "--print-config"]);
    assert!(o.status.success());
    let printed = String::from_utf8(o.stdout).unwrap();
    assert!(printed.contains("k = 1\n") && printed.contains("grid.per_decade = 30\n"));
    let again = dir.path().join("again.cfg");
    std::fs::write(&again, &printed).unwrap();
    let o = run(dir.path(), &["sweep", "--config", again.to_str().unwrap(), "--print-config"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), printed);

    std::fs::write(&cfg, "cmd = sweep\ngrid.nodes = 40\n").unwrap();
    let o = run(dir.path(), &["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.nodes"));
}

#[test]
fn verify_writes_one_csv_per_group() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(dir.path(), &["verify", "--n", "3", "--k", "2"]).status.success());
    for f in ["verify_norms.csv", "verify_interactions.csv", "verify_projection_gram.csv"] {
        let rows = csv_rows(&dir.path().join(f));
        assert_eq!(rows[0], ["case", "sweep_var", "measured", "predicted_exponent", "fitted_exponent", "verdict"]);
        assert!(rows.len() > 1);
    }
    let summary = csv_rows(&dir.path().join("verify_summary.csv"));
    let fepli2 = summary.iter().find(|r| r[0] == "fepli2_k2").unwrap();
    assert_eq!(fepli2.last().unwrap(), "pass");
}
