use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn critflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_critflow")).args(args).env_remove("CRITFLOW_THREADS").output().unwrap()
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.json"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn annulus_run_has_no_critical_points() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("annulus_smooth");
    let o = critflow(&["run", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap(), "--h", "0.05", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["status"], "ok");
    assert_eq!(report["M"], 1);
    assert_eq!(report["points"].as_array().unwrap().len(), 0);
    for f in ["solution.csv", "gradient.csv", "levels.svg", "report.json"] {
        assert!(dir.path().join("annulus_smooth").join(f).is_file(), "{f}");
    }
}

#[test]
fn three_hole_disc_reports_index_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("disc3holes_radiussq");
    let o = critflow(&["run", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap(), "--h", "0.04", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let points = report["points"].as_array().unwrap();
    assert_eq!(points.len(), 1);
    assert_eq!(points[0]["index"], 2);
    assert_eq!(report["total_index"], 2);
}

#[test]
fn text_report_ends_with_status() {
    let dir = tempfile::tempdir().unwrap();
    let o = critflow(&["run", config("annulus_lipschitz").to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap(), "--h", "0.08"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).trim_end().ends_with("status: Ok"), "{}", stdout(&o));
}

#[test]
fn coarse_mesh_is_a_hard_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = critflow(&["run", config("disc3holes_radiussq").to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap(), "--h", "0.2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("too coarse"));
}

#[test]
fn missing_config_is_a_hard_error() {
    let o = critflow(&["run", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_thread_count_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_critflow"))
        .args(["mesh", config("annulus_smooth").to_str().unwrap(), "-o", "/dev/null"])
        .env("CRITFLOW_THREADS", "0")
        .output()
        .unwrap();
    // mesh does not read the thread count
    assert_eq!(o.status.code(), Some(0));
    let o = Command::new(env!("CARGO_BIN_EXE_critflow"))
        .args(["oracle", "radial", "--h", "0.05"])
        .env("CRITFLOW_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn mesh_command_writes_a_loadable_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.txt");
    let o = critflow(&["mesh", config("halfdisc1hole_radiussq").to_str().unwrap(), "-o", out.to_str().unwrap(), "--h", "0.05"]);
    assert_eq!(o.status.code(), Some(0));
    let mesh = critflow::mesh::io::load_mesh(&out).unwrap();
    assert_eq!(mesh.hole_count(), 1);
    assert_eq!(mesh.corner_vertex_ids().len(), 2);
}

#[test]
fn presets_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = critflow(&["presets", "--write", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    for name in critflow::pipeline::PRESETS {
        let written = std::fs::read_to_string(dir.path().join(format!("{name}.json"))).unwrap();
        let bundled = critflow::pipeline::ProblemConfig::load(config(name)).unwrap();
        assert_eq!(critflow::pipeline::ProblemConfig::from_json(&written).unwrap(), bundled, "{name}");
    }
    let listing = stdout(&critflow(&["presets"]));
    assert_eq!(listing.lines().count(), 11);
}

#[test]
fn oracles_pass() {
    for name in ["halfplane", "invariance"] {
        let o = critflow(&["oracle", name, "--format", "json"]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stdout(&o));
        let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(r["pass"], true);
    }
    let coarse = critflow(&["oracle", "halfplane", "--h", "0.05"]);
    assert_eq!(coarse.status.code(), Some(2));
    assert!(stdout(&coarse).starts_with("[FAIL]"));
}

#[test]
fn accept_subset_reports_one_line_per_criterion() {
    let o = critflow(&["accept", "--only", "3", "--only", "9"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.starts_with("[PASS]  3 ")));
    assert!(out.lines().any(|l| l.starts_with("[PASS]  9 ")));
    assert!(out.contains("2/2 criteria passed"));
    assert_eq!(critflow(&["accept", "--only", "12"]).status.code(), Some(1));
}
