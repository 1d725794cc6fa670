//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use critflow::pipeline::{build_mesh, preset};
use critflow::{assemble, solve, CoefficientField, Mesh, SolutionField};

/// Mesh and coefficient of a bundled preset at mesh size `h`.
pub fn fixture(name: &str, h: f64) -> (Arc<Mesh>, CoefficientField) {
    let cfg = preset(name, h).expect("known preset");
    (Arc::new(build_mesh(&cfg).expect("preset meshes")), cfg.coefficient)
}

pub fn solved(name: &str, h: f64) -> SolutionField {
    let (mesh, rho) = fixture(name, h);
    solve(&assemble(&mesh, &rho).expect("assembles"), 1e-10, None).expect("converges")
}
