use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use patchdyn::output::read_table;
use patchdyn::ConfigDocument;
use patchdyn_core::{ModelSpec, SimConfig};

fn patchdyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchdyn")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, spec: ModelSpec, sim: SimConfig) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, ConfigDocument::new(spec, sim).to_json()).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn classify_single_patch() {
    let dir = tempfile::tempdir().unwrap();
    let sim = SimConfig::new(1e-3, 100.0, 1);
    let extinct = write_config(dir.path(), "e.json", ModelSpec::single_patch(0.5, 2.0, 1.0), sim.clone());
    let out = patchdyn(&["classify", "--config", s(&extinct)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("Extinct"));

    let edge = write_config(dir.path(), "z.json", ModelSpec::single_patch(1.0, 2.0, 1.0), sim);
    assert_eq!(patchdyn(&["classify", "--config", s(&edge)]).status.code(), Some(0));
    assert_eq!(patchdyn(&["classify", "--strict", "--config", s(&edge)]).status.code(), Some(3));
}

#[test]
fn validate_names_the_bad_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ModelSpec::two_patch_single_driver([1.0, 1.0], 1.0, 1.0, [1.0, 1.0], [1.0, 1.0]);
    spec.dispersal[(0, 1)] = 0.5;
    let p = write_config(dir.path(), "bad.json", spec, SimConfig::default());
    let out = patchdyn(&["validate", "--config", s(&p)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 0"));
}

#[test]
fn unknown_keys_are_rejected_with_their_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "c.json", ModelSpec::single_patch(0.5, 2.0, 1.0), SimConfig::default());
    let text = std::fs::read_to_string(&p).unwrap().replace("\"dt\"", "\"dtt\"");
    std::fs::write(&p, text).unwrap();
    let out = patchdyn(&["lyapunov", "--config", s(&p)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sim"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn numerical_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // equal loadings on one driver: the proportion is deterministic
    let spec = ModelSpec::two_patch_single_driver([3.0, 4.0], 1.0, 1.0, [1.0, 1.0], [1.0, 1.0]);
    let p = write_config(dir.path(), "d.json", spec, SimConfig::default());
    assert_eq!(patchdyn(&["density", "--config", s(&p)]).status.code(), Some(2));
}

#[test]
fn figure_anchor_and_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f.csv");
    let status = patchdyn(&["figure", "--preset", "evans-correlation", "--out", s(&out)]).status;
    assert!(status.success());
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("# patchdyn figure seed=0 schema=1\n"));
    let (header, rows) = read_table(&out).unwrap();
    assert_eq!(header, ["alpha", "rho", "r", "stderr", "method"]);
    let num = |r: &Vec<String>, i: usize| r[i].parse::<f64>().unwrap();
    let full: Vec<&Vec<String>> = rows.iter().filter(|r| num(r, 1) == 1.0).collect();
    let anchor = full.iter().find(|r| num(r, 0) == 1.0).unwrap();
    assert!((num(anchor, 2) - 0.118034).abs() <= (3.0 * num(anchor, 3)).max(1e-6));
    let tail: Vec<f64> = full.iter().filter(|r| num(r, 0) >= 5.0).map(|r| num(r, 2)).collect();
    assert!(tail.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn simulate_and_scan_tables() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ModelSpec::two_patch([3.0, 4.0], 1.0, 1.0, [1.0, 1.0], 0.2, [1.0, 1.0]);
    let p = write_config(dir.path(), "m.json", spec, SimConfig::new(1e-2, 1.0, 3));

    let sim = dir.path().join("x.csv");
    assert!(patchdyn(&["simulate", "--config", s(&p), "--coords", "ys", "--out", s(&sim)]).status.success());
    let (header, rows) = read_table(&sim).unwrap();
    assert_eq!(header, ["t", "y1", "y2", "s"]);
    assert_eq!(rows.len(), 101);

    let scan = dir.path().join("scan.csv");
    let out = patchdyn(&["scan", "--config", s(&p), "--param", "rho", "--grid", "0:1:0.25", "--out", s(&scan)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_table(&scan).unwrap();
    assert_eq!(header, ["param", "r", "stderr", "method"]);
    assert_eq!(rows.len(), 5);
    let r: Vec<f64> = rows.iter().map(|row| row[1].parse().unwrap()).collect();
    assert!(r.windows(2).all(|w| w[1] < w[0]), "correlation lowers r: {r:?}");
}

#[test]
fn lyapunov_json() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(
        dir.path(),
        "l.json",
        ModelSpec::two_patch([3.0, 4.0], 1.0, 1.0, [7f64.sqrt(); 2], 1.0, [1.0, 1.0]),
        SimConfig::default(),
    );
    let out = patchdyn(&["lyapunov", "--config", s(&p), "--method", "closedform", "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["value"].as_f64().unwrap() - 0.118034).abs() < 1e-6);
    assert_eq!(v["method"], "closed_form");
}
