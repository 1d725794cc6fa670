//! Critical points of the discrete solution: detection, indices from the
//! winding of ∇u, boundary level-line windings and Hopf sign checks.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{FemError, SolutionField};
use crate::geometry::{wrap_angle, Point, Vec2};
use crate::levelset::{extract_level_lines, ContourPolyline};
use crate::mesh::BoundaryMarker;

/// Allowed distance of a winding from the nearest integer.
pub const INTEGER_TOL: f64 = 0.05;
pub const DEFAULT_G_MIN: f64 = 1e-12;
const MAX_ROUNDS: usize = 40;
const ZERO_RETRIES: usize = 3;

#[derive(Debug, Error)]
pub enum CritError {
    #[error("gradient vanishes on the contour at ({x}, {y})")]
    CriticalOnContour { x: f64, y: f64 },
    #[error("contour is not closed")]
    NotClosed,
    #[error("contour sample ({x}, {y}) lies outside the domain")]
    OutsideDomain { x: f64, y: f64 },
    #[error("winding {value} at ({x}, {y}) is not within {INTEGER_TOL} of an integer; the mesh is probably under-resolved")]
    IndexNotInteger { value: f64, x: f64, y: f64 },
    #[error("patches around ({ax}, {ay}) and ({bx}, {by}) overlap")]
    OverlappingPatches { ax: f64, ay: f64, bx: f64, by: f64 },
    #[error("negative index {index} at ({x}, {y})")]
    NegativeIndex { index: i64, x: f64, y: f64 },
    #[error(transparent)]
    Fem(#[from] FemError),
}

/// Point evaluation of a planar vector field; `None` outside its domain.
pub trait GradientField {
    fn gradient(&self, p: Point) -> Option<Vec2>;
}

impl GradientField for SolutionField {
    fn gradient(&self, p: Point) -> Option<Vec2> {
        self.gradient_at(p).ok()
    }
}

/// Closed-form vector field.
pub struct AnalyticGradient<F>(pub F);

impl<F: Fn(Point) -> Vec2> GradientField for AnalyticGradient<F> {
    fn gradient(&self, p: Point) -> Option<Vec2> {
        Some((self.0)(p))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Winding {
    /// Total turning of the field divided by 2π.
    pub value: f64,
    /// Every consecutive angle step ended below π/2.
    pub resolved: bool,
    pub samples: usize,
}

/// W = (1/2π) Σ wrap(θ_{k+1} − θ_k) along a closed contour; the index of the
/// enclosed region is −W.
pub fn winding_of_gradient<G: GradientField + ?Sized>(field: &G, contour: &ContourPolyline, g_min: f64) -> Result<f64, CritError> {
    if !contour.closed {
        return Err(CritError::NotClosed);
    }
    Ok(winding_along(field, &contour.points, g_min)?.value)
}

fn sample<G: GradientField + ?Sized>(field: &G, p: Point, next: Point, g_min: f64) -> Result<(Point, f64), CritError> {
    let mut q = p;
    for attempt in 0..=ZERO_RETRIES {
        let g = field.gradient(q).ok_or(CritError::OutsideDomain { x: q.x, y: q.y })?;
        if g.norm() > g_min {
            return Ok((q, g.angle()));
        }
        // Nudge the sample along the contour.
        q = p + (next - p) * (0.25 / (1 << attempt) as f64);
    }
    Err(CritError::CriticalOnContour { x: p.x, y: p.y })
}

/// Winding along the closed polygon `points`, bisecting segments until every
/// angle step is below π/2.
pub fn winding_along<G: GradientField + ?Sized>(field: &G, points: &[Point], g_min: f64) -> Result<Winding, CritError> {
    let n = points.len();
    if n < 3 {
        return Err(CritError::NotClosed);
    }
    let scale = points.iter().map(|p| p.dist(points[0])).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let min_len = 1e-9 * scale;
    let mut samples: Vec<(Point, f64)> = Vec::with_capacity(n);
    for i in 0..n {
        samples.push(sample(field, points[i], points[(i + 1) % n], g_min)?);
    }
    let mut resolved = false;
    for _ in 0..MAX_ROUNDS {
        let m = samples.len();
        let mut next = Vec::with_capacity(m + m / 4);
        let mut inserted = 0;
        for i in 0..m {
            let (p, a) = samples[i];
            let (q, b) = samples[(i + 1) % m];
            next.push((p, a));
            if wrap_angle(b - a).abs() >= 0.5 * PI && p.dist(q) > min_len {
                next.push(sample(field, p.midpoint(q), q, g_min)?);
                inserted += 1;
            }
        }
        samples = next;
        if inserted == 0 {
            resolved = true;
            break;
        }
    }
    let m = samples.len();
    let total: f64 = (0..m).map(|i| wrap_angle(samples[(i + 1) % m].1 - samples[i].1)).sum();
    if !resolved {
        resolved = (0..m).all(|i| wrap_angle(samples[(i + 1) % m].1 - samples[i].1).abs() < 0.5 * PI);
    }
    Ok(Winding { value: total / (2.0 * PI), resolved, samples: m })
}

/// A vertex whose one-ring minimum of |∇u| is locally minimal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub vertex: usize,
    pub location: Point,
    pub gradient_norm: f64,
}

/// Candidate critical points. Vertices closer than `exclusion` to the
/// boundary or to a corner are skipped; survivors closer than twice the
/// certification patch diameter to a better candidate are suppressed.
pub fn detect_critical_points(solution: &SolutionField, g_threshold: f64, exclusion: f64) -> Vec<Candidate> {
    let mesh = solution.mesh();
    let h = mesh.h();
    let grads = solution.element_gradients();
    let markers = mesh.vertex_markers();
    let mut ring_min = vec![f64::INFINITY; mesh.vertices().len()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let g = grads[t].norm();
        for &v in tri {
            ring_min[v] = ring_min[v].min(g);
        }
    }
    let nbrs = mesh.vertex_neighbors();
    let corners: Vec<Point> = mesh.corner_vertex_ids().iter().map(|&c| mesh.vertices()[c]).collect();
    let mut cands: Vec<Candidate> = Vec::new();
    for v in 0..mesh.vertices().len() {
        if markers[v].is_some() || ring_min[v] >= g_threshold {
            continue;
        }
        if nbrs[v].iter().any(|&w| ring_min[w] < ring_min[v]) {
            continue;
        }
        let p = mesh.vertices()[v];
        if corners.iter().any(|c| c.dist(p) < exclusion) || mesh.boundary_distance(p) < exclusion {
            continue;
        }
        cands.push(Candidate { vertex: v, location: p, gradient_norm: ring_min[v] });
    }
    cands.sort_by(|a, b| a.gradient_norm.total_cmp(&b.gradient_norm).then(a.vertex.cmp(&b.vertex)));
    let sep = 6.0 * h;
    let mut kept: Vec<Candidate> = Vec::new();
    for c in cands {
        if kept.iter().all(|k| k.location.dist(c.location) > sep) {
            kept.push(c);
        }
    }
    kept.sort_by(|a, b| a.location.x.total_cmp(&b.location.x).then(a.location.y.total_cmp(&b.location.y)));
    kept
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Certified,
    Heuristic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub x: f64,
    pub y: f64,
    pub index: i64,
    pub patch_radius: f64,
    pub confidence: Confidence,
    pub winding: f64,
}

impl CriticalPoint {
    pub fn location(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopfViolation {
    pub edge: [usize; 2],
    pub marker: String,
    pub normal_derivative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopfReport {
    pub exterior: bool,
    pub interior: bool,
    pub exterior_edges_checked: usize,
    pub interior_edges_checked: usize,
    pub violations: Vec<HopfViolation>,
}

/// Signs of ∂ₙu on boundary edges away from corners: negative on the
/// exterior, positive on holes.
pub fn hopf_check(solution: &SolutionField, corner_exclusion: f64) -> HopfReport {
    let mesh = solution.mesh();
    let corners: Vec<Point> = mesh.corner_vertex_ids().iter().map(|&c| mesh.vertices()[c]).collect();
    let mut rep =
        HopfReport { exterior: true, interior: true, exterior_edges_checked: 0, interior_edges_checked: 0, violations: Vec::new() };
    for (e, &t) in mesh.boundary_edges().iter().zip(mesh.boundary_triangles()) {
        let (a, b) = (mesh.vertices()[e.v[0]], mesh.vertices()[e.v[1]]);
        if corners.iter().any(|c| c.dist(a.midpoint(b)) <= corner_exclusion) {
            continue;
        }
        let d = b - a;
        // The domain is on the left, so the outward normal points right.
        let outward = Point::new(d.y, -d.x) * (1.0 / d.norm());
        let dn = solution.element_gradients()[t].dot(outward);
        let ok = match e.marker {
            BoundaryMarker::Exterior => {
                rep.exterior_edges_checked += 1;
                dn < 0.0
            }
            BoundaryMarker::Hole(_) => {
                rep.interior_edges_checked += 1;
                dn > 0.0
            }
        };
        if !ok {
            match e.marker {
                BoundaryMarker::Exterior => rep.exterior = false,
                BoundaryMarker::Hole(_) => rep.interior = false,
            }
            rep.violations.push(HopfViolation { edge: e.v, marker: e.marker.to_string(), normal_derivative: dn });
        }
    }
    rep
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryWindings {
    pub epsilon: f64,
    /// Winding of ∇u along the level line u = ε, traversed clockwise.
    pub exterior_level_line: f64,
    /// Windings along the components of u = 1 − ε, traversed counterclockwise.
    pub interior_level_lines: Vec<f64>,
}

impl BoundaryWindings {
    pub fn interior_sum(&self) -> f64 {
        self.interior_level_lines.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CornerReport {
    pub vertex: usize,
    pub x: f64,
    pub y: f64,
    /// Smallest |∇u| over the triangles at the corner.
    pub gradient_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportChecks {
    pub count_matches: bool,
    pub integer_windings: bool,
    pub argument_principle: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointReport {
    #[serde(rename = "M")]
    pub m: usize,
    pub expected: i64,
    /// False when there are no holes and the count theorem does not apply.
    pub applicable: bool,
    pub total_index: i64,
    pub points: Vec<CriticalPoint>,
    pub candidates: usize,
    pub boundary_corners: Vec<CornerReport>,
    pub hopf: HopfReport,
    pub boundary_windings: Option<BoundaryWindings>,
    pub checks: ReportChecks,
    pub notes: Vec<String>,
}

impl CriticalPointReport {
    /// Count matches and every winding is an integer.
    pub fn passed(&self) -> bool {
        self.applicable && self.checks.count_matches && self.checks.integer_windings
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "holes M = {}   expected N = M-1 = {}", self.m, self.expected);
        if !self.applicable {
            let _ = writeln!(s, "critical-point count: not applicable without holes");
        }
        let _ = writeln!(s, "{:>4}  {:>12}  {:>12}  {:>5}  {:>10}  confidence", "#", "x", "y", "index", "radius");
        for (i, p) in self.points.iter().enumerate() {
            let conf = match p.confidence {
                Confidence::Certified => "certified",
                Confidence::Heuristic => "heuristic",
            };
            let _ = writeln!(s, "{:>4}  {:>12.6}  {:>12.6}  {:>5}  {:>10.6}  {}", i + 1, p.x, p.y, p.index, p.patch_radius, conf);
        }
        let _ = writeln!(s, "total index = {}  ({} candidates examined)", self.total_index, self.candidates);
        for c in &self.boundary_corners {
            let _ = writeln!(s, "corner ({:.6}, {:.6}): min |grad u| = {:.3e}", c.x, c.y, c.gradient_norm);
        }
        let _ = writeln!(
            s,
            "hopf: exterior {} ({} edges), interior {} ({} edges)",
            ok(self.hopf.exterior),
            self.hopf.exterior_edges_checked,
            ok(self.hopf.interior),
            self.hopf.interior_edges_checked
        );
        if let Some(w) = &self.boundary_windings {
            let ints: Vec<String> = w.interior_level_lines.iter().map(|v| format!("{v:.4}")).collect();
            let _ = writeln!(
                s,
                "level-line windings (eps = {}): exterior {:.4}, interior [{}] sum {:.4}",
                w.epsilon,
                w.exterior_level_line,
                ints.join(", "),
                w.interior_sum()
            );
        }
        let _ = writeln!(
            s,
            "checks: count {}, integer windings {}, argument principle {}",
            ok(self.checks.count_matches),
            ok(self.checks.integer_windings),
            ok(self.checks.argument_principle)
        );
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAIL"
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    pub epsilon_level: f64,
    pub g_min: f64,
    /// Defaults to 5h.
    pub corner_exclusion: Option<f64>,
    /// Defaults to 10·h·max|∇u|.
    pub g_threshold: Option<f64>,
    /// Boundary and corner exclusion for candidates; defaults to 3h.
    pub boundary_exclusion: Option<f64>,
    pub contour_samples: usize,
    pub n_level_lines: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            epsilon_level: 0.05,
            g_min: DEFAULT_G_MIN,
            corner_exclusion: None,
            g_threshold: None,
            boundary_exclusion: None,
            contour_samples: 64,
            n_level_lines: 20,
        }
    }
}

fn near_integer(v: f64) -> bool {
    (v - v.round()).abs() <= INTEGER_TOL
}

/// Index of one candidate from windings on circles of radius 3h, 4h, 5h.
fn certify_one(solution: &SolutionField, c: &Candidate, opts: &AnalysisOptions) -> Result<Option<CriticalPoint>, CritError> {
    let h = solution.mesh().h();
    let room = solution.mesh().boundary_distance(c.location);
    let mut last_err = None;
    for factor in [3.0, 4.0, 5.0] {
        let r = factor * h;
        if r >= room && factor > 3.0 {
            break;
        }
        let contour = ContourPolyline::circle(c.location, r, opts.contour_samples);
        match winding_along(solution, &contour.points, opts.g_min) {
            Ok(w) => {
                let index = -w.value;
                if !near_integer(index) {
                    return Err(CritError::IndexNotInteger { value: index, x: c.location.x, y: c.location.y });
                }
                let k = index.round() as i64;
                if k == 0 {
                    return Ok(None);
                }
                if k < 0 {
                    return Err(CritError::NegativeIndex { index: k, x: c.location.x, y: c.location.y });
                }
                return Ok(Some(CriticalPoint {
                    x: c.location.x,
                    y: c.location.y,
                    index: k,
                    patch_radius: r,
                    confidence: if w.resolved { Confidence::Certified } else { Confidence::Heuristic },
                    winding: w.value,
                }));
            }
            Err(e @ (CritError::CriticalOnContour { .. } | CritError::OutsideDomain { .. })) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one radius tried"))
}

/// Windings along the level lines u = ε (clockwise) and u = 1 − ε
/// (counterclockwise), halving ε when the gradient vanishes on a line.
pub fn boundary_windings(solution: &SolutionField, epsilon: f64, g_min: f64) -> Result<BoundaryWindings, CritError> {
    let mut eps = epsilon;
    let mut last = None;
    for _ in 0..5 {
        match boundary_windings_at(solution, eps, g_min) {
            Ok(w) => return Ok(w),
            Err(e @ CritError::CriticalOnContour { .. }) => {
                last = Some(e);
                eps *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("attempted"))
}

fn level_winding(solution: &SolutionField, line: &ContourPolyline, g_min: f64) -> Result<f64, CritError> {
    // Midpoints lie inside the crossed triangles, away from element edges.
    Ok(winding_along(solution, &line.midpoint_loop(), g_min)?.value)
}

fn boundary_windings_at(solution: &SolutionField, eps: f64, g_min: f64) -> Result<BoundaryWindings, CritError> {
    let mut exterior = 0.0;
    for line in extract_level_lines(solution, eps).iter().filter(|l| l.closed) {
        exterior -= level_winding(solution, line, g_min)?;
    }
    let mut interior = Vec::new();
    for line in extract_level_lines(solution, 1.0 - eps).iter().filter(|l| l.closed) {
        interior.push(level_winding(solution, line, g_min)?);
    }
    Ok(BoundaryWindings { epsilon: eps, exterior_level_line: exterior, interior_level_lines: interior })
}

/// Certifies candidate indices and assembles the full report.
pub fn certify_indices(
    solution: &SolutionField,
    candidates: &[Candidate],
    opts: &AnalysisOptions,
) -> Result<CriticalPointReport, CritError> {
    let mesh = solution.mesh();
    let h = mesh.h();
    for (i, a) in candidates.iter().enumerate() {
        for b in &candidates[i + 1..] {
            if a.location.dist(b.location) <= 6.0 * h {
                return Err(CritError::OverlappingPatches { ax: a.location.x, ay: a.location.y, bx: b.location.x, by: b.location.y });
            }
        }
    }
    let m = mesh.hole_count();
    let expected = m as i64 - 1;
    let applicable = m >= 1;
    let mut notes = Vec::new();
    let mut points = Vec::new();
    if applicable {
        for c in candidates {
            if let Some(p) = certify_one(solution, c, opts)? {
                points.push(p);
            }
        }
    } else {
        notes.push("no holes: the critical-point count N = M-1 does not apply".to_string());
    }
    points.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let total_index: i64 = points.iter().map(|p| p.index).sum();

    let grads = solution.element_gradients();
    let vt = mesh.vertex_triangles();
    let boundary_corners = mesh
        .corner_vertex_ids()
        .iter()
        .map(|&v| CornerReport {
            vertex: v,
            x: mesh.vertices()[v].x,
            y: mesh.vertices()[v].y,
            gradient_norm: vt[v].iter().map(|&t| grads[t].norm()).fold(f64::INFINITY, f64::min),
        })
        .collect();

    let hopf = hopf_check(solution, opts.corner_exclusion.unwrap_or(5.0 * h));
    let windings = if applicable { Some(boundary_windings(solution, opts.epsilon_level, opts.g_min)?) } else { None };

    let mut integer_windings = points.iter().all(|p| near_integer(p.winding));
    let mut argument_principle = true;
    if let Some(w) = &windings {
        let all = std::iter::once(w.exterior_level_line).chain(w.interior_level_lines.iter().copied());
        let all: Vec<f64> = all.collect();
        integer_windings &= all.iter().all(|&v| near_integer(v));
        let budget: i64 = all.iter().map(|v| v.round() as i64).sum();
        argument_principle = budget == expected;
        if w.epsilon != opts.epsilon_level {
            notes.push(format!("level offset reduced to {} after a vanishing gradient on the level line", w.epsilon));
        }
    }
    let checks = ReportChecks { count_matches: applicable && total_index == expected, integer_windings, argument_principle };
    Ok(CriticalPointReport {
        m,
        expected,
        applicable,
        total_index,
        points,
        candidates: candidates.len(),
        boundary_corners,
        hopf,
        boundary_windings: windings,
        checks,
        notes,
    })
}

/// Detection followed by certification with the option defaults resolved
/// against the mesh size.
pub fn analyze(solution: &SolutionField, opts: &AnalysisOptions) -> Result<CriticalPointReport, CritError> {
    let h = solution.mesh().h();
    let threshold = opts.g_threshold.unwrap_or(10.0 * h * solution.max_gradient_norm());
    let exclusion = opts.boundary_exclusion.unwrap_or(3.0 * h);
    let candidates = detect_critical_points(solution, threshold, exclusion);
    certify_indices(solution, &candidates, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saddle_has_index_one() {
        let f = AnalyticGradient(|p: Point| Point::new(p.x, -p.y));
        let w = winding_of_gradient(&f, &ContourPolyline::circle(Point::ORIGIN, 0.1, 64), DEFAULT_G_MIN).unwrap();
        assert!((w + 1.0).abs() < 1e-12);
    }

    #[test]
    fn monkey_saddle_has_index_two() {
        // ∇ Re(z³) = (3(x² − y²), −6xy)
        let f = AnalyticGradient(|p: Point| Point::new(3.0 * (p.x * p.x - p.y * p.y), -6.0 * p.x * p.y));
        let w = winding_of_gradient(&f, &ContourPolyline::circle(Point::new(0.01, 0.0), 0.3, 8), DEFAULT_G_MIN).unwrap();
        assert!((w + 2.0).abs() < 1e-12, "{w}");
    }

    #[test]
    fn zero_on_contour_is_reported() {
        let f = AnalyticGradient(|_p: Point| Point::ORIGIN);
        let r = winding_of_gradient(&f, &ContourPolyline::circle(Point::ORIGIN, 1.0, 16), DEFAULT_G_MIN);
        assert!(matches!(r, Err(CritError::CriticalOnContour { .. })));
        let mut open = ContourPolyline::circle(Point::ORIGIN, 1.0, 16);
        open.closed = false;
        let g = AnalyticGradient(|p: Point| p);
        assert!(matches!(winding_of_gradient(&g, &open, DEFAULT_G_MIN), Err(CritError::NotClosed)));
    }
}
