//! Problem configuration and the mesh → solve → analyze → report pipeline.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coefficient::{CoefficientError, CoefficientField, CoefficientKind};
use crate::critpoint::{analyze, AnalysisOptions, CriticalPointReport};
use crate::fem::{assemble_with, solve, AssemblyOptions, FemError, Quadrature, SolutionField, DEFAULT_TOL};
use crate::geometry::Point;
use crate::levelset::{extract_level_lines, level_components, render_svg, uniform_levels};
use crate::mesh::{generate_mesh_with, io::save_mesh, DomainSpec, HoleSpec, Mesh, MeshError, MeshOptions, OuterShape};
use crate::oracle::{halfplane_discontinuity_exact, RadialExact};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Coefficient(#[from] CoefficientError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: Option<usize>,
    pub quadrature: Quadrature,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: DEFAULT_TOL, max_iter: None, quadrature: Quadrature::Barycenter }
    }
}

/// Artifact paths; relative paths resolve against the run's output directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solution_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels_svg: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report_json: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub domain: DomainSpec,
    pub coefficient: CoefficientField,
    pub mesh: MeshOptions,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    #[serde(default)]
    pub outputs: OutputConfig,
}

fn config_err(path: &str, message: impl Into<String>) -> PipelineError {
    PipelineError::Config { path: path.to_string(), message: message.into() }
}

impl ProblemConfig {
    /// Parses JSON; errors carry the JSON path of the offending field.
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ProblemConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(&path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Numeric parameters must be positive.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let positive = |path: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(config_err(path, format!("must be positive, got {v}")))
            }
        };
        positive("mesh.h", self.mesh.h)?;
        positive("solver.tol", self.solver.tol)?;
        if self.solver.max_iter == Some(0) {
            return Err(config_err("solver.max_iter", "must be positive"));
        }
        let a = &self.analysis;
        positive("analysis.epsilon_level", a.epsilon_level)?;
        if a.epsilon_level >= 0.5 {
            return Err(config_err("analysis.epsilon_level", format!("must be below 0.5, got {}", a.epsilon_level)));
        }
        positive("analysis.g_min", a.g_min)?;
        if let Some(c) = a.corner_exclusion {
            positive("analysis.corner_exclusion", c)?;
        }
        if let Some(g) = a.g_threshold {
            positive("analysis.g_threshold", g)?;
        }
        if let Some(b) = a.boundary_exclusion {
            positive("analysis.boundary_exclusion", b)?;
        }
        if a.n_level_lines == 0 {
            return Err(config_err("analysis.n_level_lines", "must be positive"));
        }
        if a.contour_samples < 8 {
            return Err(config_err("analysis.contour_samples", "must be at least 8"));
        }
        Ok(())
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.mesh.h = h;
        self
    }
}

/// One closed-form comparison attached to a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub name: String,
    pub metric: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleResult {
    pub fn new(name: &str, metric: &str, value: f64, tolerance: f64) -> Self {
        OracleResult { name: name.into(), metric: metric.into(), value, tolerance, pass: value <= tolerance }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeshSummary {
    pub vertices: usize,
    pub triangles: usize,
    pub boundary_edges: usize,
    pub h: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverSummary {
    pub iterations: usize,
    pub residual: f64,
    pub tol: f64,
    pub min_element_rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelSummary {
    pub level: f64,
    pub lines: usize,
    pub closed_lines: usize,
    pub sublevel_components: usize,
    pub k_plus: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    NotApplicable,
    AnalysisMismatch,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok | RunStatus::NotApplicable => 0,
            RunStatus::AnalysisMismatch => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub status: RunStatus,
    pub coefficient: String,
    pub mesh: MeshSummary,
    pub solver: SolverSummary,
    #[serde(flatten)]
    pub analysis: Option<CriticalPointReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis_error: Option<String>,
    pub fluxes: BTreeMap<String, f64>,
    pub level_sets: Vec<LevelSummary>,
    pub oracles: Vec<OracleResult>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(n) = &self.name {
            s.push_str(&format!("{n}\n"));
        }
        s.push_str(&format!(
            "mesh: {} vertices, {} triangles, h = {}\nsolver: {} iterations, relative residual {:.3e}\n",
            self.mesh.vertices, self.mesh.triangles, self.mesh.h, self.solver.iterations, self.solver.residual
        ));
        match (&self.analysis, &self.analysis_error) {
            (Some(a), _) => s.push_str(&a.to_text()),
            (None, Some(e)) => s.push_str(&format!("analysis failed: {e}\n")),
            (None, None) => {}
        }
        for o in &self.oracles {
            s.push_str(&format!(
                "oracle {}: {} = {:.3e} (tolerance {:.1e}) {}\n",
                o.name,
                o.metric,
                o.value,
                o.tolerance,
                if o.pass { "ok" } else { "FAIL" }
            ));
        }
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s.push_str(&format!("status: {:?}\n", self.status));
        s
    }
}

/// Everything a run produced, in memory.
pub struct RunOutcome {
    pub mesh: Arc<Mesh>,
    pub solution: SolutionField,
    pub report: RunReport,
    pub svg: String,
}

pub fn build_mesh(config: &ProblemConfig) -> Result<Mesh, PipelineError> {
    config.domain.validate()?;
    let interface = if config.mesh.align_interface { config.coefficient.interface() } else { None };
    Ok(generate_mesh_with(&config.domain, &config.mesh, interface)?)
}

fn annulus_inner_radius(domain: &DomainSpec) -> Option<f64> {
    match (&domain.outer, domain.holes.as_slice()) {
        (OuterShape::Disc { center, radius }, [hole]) if *center == Point::ORIGIN && *radius == 1.0 && hole.center == Point::ORIGIN => {
            Some(hole.radius)
        }
        _ => None,
    }
}

/// Closed-form comparisons that apply to the configuration.
pub fn oracles_for(config: &ProblemConfig, sol: &SolutionField) -> Vec<OracleResult> {
    let mut out = Vec::new();
    let fluxes = sol.boundary_fluxes();
    let total: f64 = fluxes.values().sum();
    let scale = fluxes.values().fold(0.0f64, |a, f| a.max(f.abs()));
    if scale > 0.0 {
        out.push(OracleResult::new("flux_balance", "relative_flux_sum", total.abs() / scale, 1e-8));
    }
    if let Some(r0) = annulus_inner_radius(&config.domain) {
        match *config.coefficient.kind() {
            CoefficientKind::Constant { .. } => {
                let err = sol.relative_l2_error(|p| p.norm().clamp(r0, 1.0).ln() / r0.ln());
                out.push(OracleResult::new("harmonic_annulus", "relative_l2_error", err, 1e-2));
            }
            CoefficientKind::PiecewiseRadial { r0: c0, r1, rho_minus, rho_plus } if c0 == r0 => {
                if let Ok(ex) = RadialExact::new(r0, r1, rho_minus, rho_plus) {
                    let err = sol.relative_l2_error(|p| ex.u_at(p));
                    out.push(OracleResult::new("radial_exact", "relative_l2_error", err, 1e-2));
                }
            }
            CoefficientKind::PiecewiseHalfplane { y1, .. } if y1 == 0.0 && r0 == 0.05 => {
                let err = sol.relative_l2_error(|p| halfplane_discontinuity_exact(p.norm().clamp(0.05, 1.0)).expect("clamped"));
                out.push(OracleResult::new("halfplane_exact", "relative_l2_error", err, 1e-2));
            }
            _ => {}
        }
    }
    out
}

/// Mesh, solve, analysis and report, without touching the filesystem.
pub fn execute(config: &ProblemConfig, threads: usize) -> Result<RunOutcome, PipelineError> {
    config.validate()?;
    let mesh = Arc::new(build_mesh(config)?);
    let opts = AssemblyOptions { quadrature: config.solver.quadrature, threads: threads.max(1) };
    let system = assemble_with(&mesh, &config.coefficient, &opts)?;
    let solution = solve(&system, config.solver.tol, config.solver.max_iter)?;
    let (analysis, analysis_error) = match analyze(&solution, &config.analysis) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let status = match &analysis {
        Some(a) if !a.applicable => RunStatus::NotApplicable,
        Some(a) if a.passed() => RunStatus::Ok,
        _ => RunStatus::AnalysisMismatch,
    };
    let levels = uniform_levels(config.analysis.n_level_lines);
    let level_sets = levels
        .iter()
        .map(|&level| {
            let lines = extract_level_lines(&solution, level);
            let d = level_components(&solution, level);
            LevelSummary {
                level,
                lines: lines.len(),
                closed_lines: lines.iter().filter(|l| l.closed).count(),
                sublevel_components: d.sublevel_components,
                k_plus: d.k_plus,
            }
        })
        .collect();
    let mut warnings: Vec<String> = mesh.warnings().to_vec();
    warnings.extend(solution.warnings.iter().cloned());
    let report = RunReport {
        name: config.name.clone(),
        status,
        coefficient: config.coefficient.name().to_string(),
        mesh: MeshSummary {
            vertices: mesh.vertices().len(),
            triangles: mesh.triangles().len(),
            boundary_edges: mesh.boundary_edges().len(),
            h: mesh.h(),
        },
        solver: SolverSummary {
            iterations: solution.stats.iterations,
            residual: solution.stats.residual,
            tol: config.solver.tol,
            min_element_rho: solution.stats.min_element_rho,
        },
        analysis,
        analysis_error,
        fluxes: solution.boundary_fluxes().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        level_sets,
        oracles: oracles_for(config, &solution),
        warnings,
    };
    let svg = render_svg(&solution, &levels);
    Ok(RunOutcome { mesh, solution, report, svg })
}

fn write(base: &Path, rel: &Option<PathBuf>, contents: impl FnOnce() -> Result<String, PipelineError>) -> Result<(), PipelineError> {
    let Some(rel) = rel else { return Ok(()) };
    let path = base.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| PipelineError::Io { path: parent.to_path_buf(), source })?;
    }
    fs::write(&path, contents()?).map_err(|source| PipelineError::Io { path, source })
}

/// Runs the pipeline and writes the configured artifacts under `out_dir`.
pub fn run(config: &ProblemConfig, out_dir: &Path, threads: usize) -> Result<RunOutcome, PipelineError> {
    let outcome = execute(config, threads)?;
    let o = &config.outputs;
    write(out_dir, &o.solution_csv, || Ok(outcome.solution.solution_csv()))?;
    write(out_dir, &o.gradient_csv, || Ok(outcome.solution.gradient_csv()))?;
    write(out_dir, &o.levels_svg, || Ok(outcome.svg.clone()))?;
    write(out_dir, &o.report_json, || Ok(outcome.report.to_json()))?;
    if let Some(rel) = &o.mesh {
        let path = out_dir.join(rel);
        save_mesh(&outcome.mesh, &path)?;
    }
    Ok(outcome)
}

fn holes(centers: &[Point], radius: f64) -> Vec<HoleSpec> {
    centers.iter().map(|&center| HoleSpec { center, radius }).collect()
}

/// The half-disc {|x − (0,−1)| < 2, y > −1}.
pub fn half_disc() -> OuterShape {
    OuterShape::HalfDisc { center: Point::new(0.0, -1.0), radius: 2.0, normal: Point::new(0.0, 1.0), offset: -1.0 }
}

pub fn three_hole_disc() -> DomainSpec {
    let c = |k: f64| Point::polar(0.5, 2.0 * PI * k / 3.0);
    DomainSpec {
        outer: OuterShape::Disc { center: Point::ORIGIN, radius: 1.0 },
        holes: holes(&[c(0.0), c(1.0), c(2.0)], 0.01),
        corner_vertices: vec![],
    }
}

pub fn three_hole_half_disc() -> DomainSpec {
    DomainSpec {
        outer: half_disc(),
        holes: holes(&[Point::new(-0.5, 0.0), Point::new(0.0, -0.5), Point::new(0.5, 0.0)], 0.01),
        corner_vertices: vec![Point::new(-2.0, -1.0), Point::new(2.0, -1.0)],
    }
}

pub fn one_hole_half_disc() -> DomainSpec {
    DomainSpec {
        outer: half_disc(),
        holes: holes(&[Point::ORIGIN], 0.01),
        corner_vertices: vec![Point::new(-2.0, -1.0), Point::new(2.0, -1.0)],
    }
}

/// Names of the bundled experiment configurations.
pub const PRESETS: [&str; 11] = [
    "annulus_smooth",
    "annulus_lipschitz",
    "annulus_radial",
    "annulus_halfplane_y0",
    "annulus_halfplane_y05",
    "annulus_largehole_y035",
    "disc3holes_radiussq",
    "disc3holes_radius",
    "halfdisc1hole_radiussq",
    "halfdisc1hole_disttopoint",
    "halfdisc3holes_radiussq",
];

/// A bundled experiment at mesh size `h`, with artifact names derived from
/// the preset name.
pub fn preset(name: &str, h: f64) -> Option<ProblemConfig> {
    let kind = |k: CoefficientKind| CoefficientField::new(k).expect("valid preset coefficient");
    let annulus = DomainSpec::annulus(0.05, 1.0);
    let halfplane = |y1: f64| kind(CoefficientKind::PiecewiseHalfplane { y1, rho_minus: 1.0, rho_plus: 1001.0 });
    let (domain, coefficient, align, description) = match name {
        "annulus_smooth" => (annulus, kind(CoefficientKind::SmoothX2), false, "annulus, rho = x^2 + 1/8"),
        "annulus_lipschitz" => (annulus, kind(CoefficientKind::LipschitzAbsX), false, "annulus, rho = |x| + 1/8"),
        "annulus_radial" => (
            annulus,
            kind(CoefficientKind::PiecewiseRadial { r0: 0.05, r1: 0.5, rho_minus: 1.0, rho_plus: 21.0 }),
            true,
            "annulus, rho jumps from 1 to 21 across r = 0.5",
        ),
        "annulus_halfplane_y0" => (annulus, halfplane(0.0), true, "annulus, rho jumps from 1 to 1001 across y = 0"),
        "annulus_halfplane_y05" => (annulus, halfplane(0.5), true, "annulus, rho jumps from 1 to 1001 across y = 0.5"),
        "annulus_largehole_y035" => {
            (DomainSpec::annulus(0.5, 1.0), halfplane(0.35), true, "annulus with hole radius 0.5, rho jumps across y = 0.35")
        }
        "disc3holes_radiussq" => {
            (three_hole_disc(), kind(CoefficientKind::RadiusSq), false, "unit disc with three holes, rho = x^2 + y^2 + 1")
        }
        "disc3holes_radius" => (
            three_hole_disc(),
            kind(CoefficientKind::Radius),
            false,
            "unit disc with three holes, rho = |x| (degenerate at the origin; experimental)",
        ),
        "halfdisc1hole_radiussq" => {
            (one_hole_half_disc(), kind(CoefficientKind::RadiusSq), false, "half-disc with one hole, rho = x^2 + y^2 + 1")
        }
        "halfdisc1hole_disttopoint" => (
            one_hole_half_disc(),
            kind(CoefficientKind::DistToPoint { point: Point::new(2.0, -1.0) }),
            false,
            "half-disc with one hole, rho = |x - (2,-1)| (degenerate at a corner; experimental)",
        ),
        "halfdisc3holes_radiussq" => {
            (three_hole_half_disc(), kind(CoefficientKind::RadiusSq), false, "half-disc with three holes, rho = x^2 + y^2 + 1")
        }
        _ => return None,
    };
    Some(ProblemConfig {
        name: Some(name.to_string()),
        description: Some(description.to_string()),
        domain,
        coefficient,
        mesh: MeshOptions { h, align_interface: align, ..MeshOptions::default() },
        solver: SolverConfig::default(),
        analysis: AnalysisOptions::default(),
        outputs: OutputConfig {
            solution_csv: Some(format!("{name}/solution.csv").into()),
            gradient_csv: Some(format!("{name}/gradient.csv").into()),
            levels_svg: Some(format!("{name}/levels.svg").into()),
            report_json: Some(format!("{name}/report.json").into()),
            mesh: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_errors_carry_paths() {
        let cfg = preset("annulus_smooth", 0.1).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
        v["mesh"]["h"] = serde_json::json!("fine");
        match ProblemConfig::from_json(&v.to_string()) {
            Err(PipelineError::Config { path, .. }) => assert_eq!(path, "mesh.h"),
            other => panic!("unexpected {other:?}"),
        }
        v["mesh"]["h"] = serde_json::json!(-1.0);
        assert!(matches!(ProblemConfig::from_json(&v.to_string()), Err(PipelineError::Config { .. })));
    }

    #[test]
    fn presets_round_trip() {
        for name in PRESETS {
            let cfg = preset(name, 0.05).unwrap();
            assert_eq!(ProblemConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        }
        assert!(preset("nope", 0.1).is_none());
    }
}
