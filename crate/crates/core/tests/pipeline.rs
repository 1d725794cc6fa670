use std::fs;
use std::path::Path;

use critflow::mesh::io::load_mesh;
use critflow::pipeline::{execute, preset, run, PipelineError, ProblemConfig, RunStatus, PRESETS};
use critflow::{DomainSpec, MeshError, OuterShape, Point};
use serde_json::Value;

fn configs_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn schema() -> jsonschema::Validator {
    let text = fs::read_to_string(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../schemas/report.schema.json"))).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn assert_valid(report: &str) {
    let v: Value = serde_json::from_str(report).unwrap();
    let validator = schema();
    let errors: Vec<String> = validator.iter_errors(&v).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "schema violations: {errors:#?}");
}

#[test]
fn bundled_configs_match_presets() {
    for name in PRESETS {
        let cfg = ProblemConfig::load(configs_dir().join(format!("{name}.json"))).unwrap();
        assert_eq!(cfg, preset(name, 0.02).unwrap(), "{name}");
    }
    assert!(preset("no_such_case", 0.02).is_none());
}

#[test]
fn reports_conform_to_schema() {
    for (name, h) in [("annulus_smooth", 0.1), ("disc3holes_radiussq", 0.05), ("annulus_radial", 0.05), ("annulus_halfplane_y0", 0.05)] {
        let out = execute(&preset(name, h).unwrap(), 1).unwrap();
        assert_eq!(out.report.status, RunStatus::Ok, "{name}");
        assert_valid(&out.report.to_json());
    }
}

#[test]
fn hole_free_domain_is_not_applicable() {
    let mut cfg = preset("annulus_smooth", 0.1).unwrap();
    cfg.domain.holes.clear();
    let out = execute(&cfg, 1).unwrap();
    assert_eq!(out.report.status, RunStatus::NotApplicable);
    assert_eq!(out.report.exit_code(), 0);
    let json = out.report.to_json();
    assert_valid(&json);
    let v: Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["M"], 0);
    assert_eq!(v["applicable"], false);
}

#[test]
fn three_hole_disc_has_one_double_saddle() {
    let out = execute(&preset("disc3holes_radiussq", 0.04).unwrap(), 1).unwrap();
    let a = out.report.analysis.as_ref().unwrap();
    assert_eq!(a.points.len(), 1);
    assert_eq!(a.points[0].index, 2);
    assert!(Point::new(a.points[0].x, a.points[0].y).norm() < 0.1);
    let w = a.boundary_windings.as_ref().unwrap();
    assert!((w.exterior_level_line + 1.0).abs() < 1e-9);
    assert!((w.interior_sum() - 3.0).abs() < 1e-9);
    assert!(a.hopf.violations.is_empty());
}

#[test]
fn run_writes_artifacts_deterministically() {
    let mut cfg = preset("halfdisc1hole_radiussq", 0.05).unwrap();
    cfg.outputs.mesh = Some("halfdisc1hole_radiussq/mesh.txt".into());
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out_a = run(&cfg, a.path(), 1).unwrap();
    run(&cfg, b.path(), 3).unwrap();
    for file in ["solution.csv", "gradient.csv", "levels.svg", "report.json", "mesh.txt"] {
        let pa = a.path().join("halfdisc1hole_radiussq").join(file);
        let pb = b.path().join("halfdisc1hole_radiussq").join(file);
        let bytes = fs::read(&pa).unwrap();
        assert!(!bytes.is_empty(), "{file}");
        assert_eq!(bytes, fs::read(&pb).unwrap(), "{file} differs between thread counts");
    }
    let dir = a.path().join("halfdisc1hole_radiussq");
    let csv = fs::read_to_string(dir.join("solution.csv")).unwrap();
    assert_eq!(csv.lines().count(), out_a.mesh.vertices().len() + 1);
    let mesh = load_mesh(dir.join("mesh.txt")).unwrap();
    assert_eq!(mesh.vertices(), out_a.mesh.vertices());
    assert!(fs::read_to_string(dir.join("levels.svg")).unwrap().starts_with("<svg"));
    assert_valid(&fs::read_to_string(dir.join("report.json")).unwrap());
}

#[test]
fn coarse_mesh_around_small_hole_is_rejected() {
    let cfg = preset("disc3holes_radiussq", 0.06).unwrap();
    match execute(&cfg, 1) {
        Err(PipelineError::Mesh(MeshError::InvalidDomain(_))) => {}
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("mesh accepted"),
    }
}

#[test]
fn config_rejects_unknown_fields_and_bad_values() {
    let text = preset("annulus_smooth", 0.1).unwrap().to_json();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["solver"]["tolerance"] = 1e-8.into();
    let err = ProblemConfig::from_json(&v.to_string()).unwrap_err();
    assert!(matches!(&err, PipelineError::Config { path, .. } if path == "solver.tolerance"), "{err}");

    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["mesh"]["h"] = (-0.1).into();
    assert!(matches!(ProblemConfig::from_json(&v.to_string()), Err(PipelineError::Config { .. })));

    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["coefficient"] = serde_json::json!({"kind": "custom", "expr": "1 + "});
    assert!(ProblemConfig::from_json(&v.to_string()).is_err());
}

#[test]
fn overlapping_holes_are_invalid() {
    let mut cfg = preset("annulus_smooth", 0.1).unwrap();
    cfg.domain = DomainSpec {
        outer: OuterShape::Disc { center: Point::ORIGIN, radius: 1.0 },
        holes: vec![
            critflow::HoleSpec { center: Point::new(0.1, 0.0), radius: 0.2 },
            critflow::HoleSpec { center: Point::new(-0.1, 0.0), radius: 0.2 },
        ],
        corner_vertices: Vec::new(),
    };
    assert!(matches!(execute(&cfg, 1), Err(PipelineError::Mesh(MeshError::InvalidDomain(_)))));
}
