//! Closed-form references and transformation harnesses.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{assemble_general, element_stiffness, shape_gradients, solve, FemError, SolutionField};
use crate::geometry::{centroid, orient2d, Point, Vec2};
use crate::mesh::{triangulate, BoundaryEdge, BoundaryMarker, DelaunayError, Mesh, MeshError};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("radius {r} outside [{lo}, {hi}]")]
    OutOfRange { r: f64, lo: f64, hi: f64 },
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error("map is singular at ({x}, {y}): |F'| = {derivative:e}")]
    MapSingular { x: f64, y: f64, derivative: f64 },
    #[error("field does not vanish on the reflection axis: u({x}, {y}) = {value:e}")]
    NonVanishingTrace { x: f64, y: f64, value: f64 },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Delaunay(#[from] DelaunayError),
    #[error(transparent)]
    Fem(#[from] FemError),
}

/// Piecewise-logarithmic solution on the annulus r₀ < r < 1 with ρ = ρ₋ for
/// r < r₁ and ρ₊ beyond; u = 1 on r = r₀ and u = 0 on r = 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialExact {
    pub r0: f64,
    pub r1: f64,
    pub rho_minus: f64,
    pub rho_plus: f64,
    pub a_minus: f64,
    pub a_plus: f64,
}

impl RadialExact {
    pub fn new(r0: f64, r1: f64, rho_minus: f64, rho_plus: f64) -> Result<Self, OracleError> {
        if !(0.0 < r0 && r0 < r1 && r1 < 1.0) {
            return Err(OracleError::Invalid(format!("need 0 < r0 < r1 < 1, got r0 = {r0}, r1 = {r1}")));
        }
        if !(rho_minus > 0.0 && rho_plus > 0.0 && rho_minus.is_finite() && rho_plus.is_finite()) {
            return Err(OracleError::Invalid(format!("coefficients must be positive, got {rho_minus}, {rho_plus}")));
        }
        let q = rho_minus / rho_plus;
        let a_minus = 1.0 / (q * r1.ln() - (r1 / r0).ln());
        Ok(RadialExact { r0, r1, rho_minus, rho_plus, a_minus, a_plus: q * a_minus })
    }

    fn check(&self, r: f64) -> Result<(), OracleError> {
        if (self.r0..=1.0).contains(&r) {
            Ok(())
        } else {
            Err(OracleError::OutOfRange { r, lo: self.r0, hi: 1.0 })
        }
    }

    pub fn u(&self, r: f64) -> Result<f64, OracleError> {
        self.check(r)?;
        Ok(if r < self.r1 { 1.0 + self.a_minus * (r / self.r0).ln() } else { self.a_plus * r.ln() })
    }

    pub fn grad(&self, x: Point) -> Result<Vec2, OracleError> {
        let r = x.norm();
        self.check(r)?;
        let a = if r < self.r1 { self.a_minus } else { self.a_plus };
        Ok(x * (a / (r * r)))
    }

    /// u at a point, clamping radii that round just outside the annulus.
    pub fn u_at(&self, p: Point) -> f64 {
        let r = p.norm().clamp(self.r0, 1.0);
        self.u(r).expect("clamped")
    }
}

/// ln r / ln 0.05: the solution on the annulus 0.05 < r < 1 for any ρ that
/// only jumps across the line y = 0.
pub fn halfplane_discontinuity_exact(r: f64) -> Result<f64, OracleError> {
    if !(0.05..=1.0).contains(&r) {
        return Err(OracleError::OutOfRange { r, lo: 0.05, hi: 1.0 });
    }
    Ok(r.ln() / 0.05f64.ln())
}

type ComplexFn = Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>;

/// Planar maps for the pullback harness. `Conjugate` and `Shear` are
/// negative controls.
#[derive(Clone)]
pub enum ConformalMap {
    Identity,
    Square,
    /// Principal branch.
    Sqrt,
    Moebius {
        a: Complex64,
        b: Complex64,
        c: Complex64,
        d: Complex64,
    },
    Custom {
        name: String,
        f: ComplexFn,
        df: ComplexFn,
    },
    /// z ↦ z̄
    Conjugate,
    /// (x, y) ↦ (x + s·y, y)
    Shear {
        s: f64,
    },
}

impl fmt::Debug for ConformalMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

fn cx(p: Point) -> Complex64 {
    Complex64::new(p.x, p.y)
}

fn pt(z: Complex64) -> Point {
    Point::new(z.re, z.im)
}

impl ConformalMap {
    pub fn name(&self) -> String {
        match self {
            ConformalMap::Identity => "identity".into(),
            ConformalMap::Square => "square".into(),
            ConformalMap::Sqrt => "sqrt".into(),
            ConformalMap::Moebius { a, b, c, d } => format!("moebius({a}, {b}, {c}, {d})"),
            ConformalMap::Custom { name, .. } => name.clone(),
            ConformalMap::Conjugate => "conjugate".into(),
            ConformalMap::Shear { s } => format!("shear({s})"),
        }
    }

    pub fn is_holomorphic(&self) -> bool {
        !matches!(self, ConformalMap::Conjugate | ConformalMap::Shear { .. })
    }

    pub fn apply(&self, p: Point) -> Point {
        let z = cx(p);
        match self {
            ConformalMap::Identity => p,
            ConformalMap::Square => pt(z * z),
            ConformalMap::Sqrt => pt(z.sqrt()),
            ConformalMap::Moebius { a, b, c, d } => pt((a * z + b) / (c * z + d)),
            ConformalMap::Custom { f, .. } => pt(f(z)),
            ConformalMap::Conjugate => Point::new(p.x, -p.y),
            ConformalMap::Shear { s } => Point::new(p.x + s * p.y, p.y),
        }
    }

    /// F′(z) for holomorphic maps.
    pub fn derivative(&self, p: Point) -> Option<Complex64> {
        let z = cx(p);
        Some(match self {
            ConformalMap::Identity => Complex64::new(1.0, 0.0),
            ConformalMap::Square => 2.0 * z,
            ConformalMap::Sqrt => 0.5 / z.sqrt(),
            ConformalMap::Moebius { a, b, c, d } => (a * d - b * c) / ((c * z + d) * (c * z + d)),
            ConformalMap::Custom { df, .. } => df(z),
            ConformalMap::Conjugate | ConformalMap::Shear { .. } => return None,
        })
    }

    /// Real Jacobian [[∂ξ/∂x, ∂ξ/∂y], [∂η/∂x, ∂η/∂y]].
    pub fn jacobian(&self, p: Point) -> [[f64; 2]; 2] {
        match self {
            ConformalMap::Identity => [[1.0, 0.0], [0.0, 1.0]],
            ConformalMap::Conjugate => [[1.0, 0.0], [0.0, -1.0]],
            ConformalMap::Shear { s } => [[1.0, *s], [0.0, 1.0]],
            _ => {
                let d = self.derivative(p).expect("holomorphic");
                [[d.re, -d.im], [d.im, d.re]]
            }
        }
    }
}

fn det(j: &[[f64; 2]; 2]) -> f64 {
    j[0][0] * j[1][1] - j[0][1] * j[1][0]
}

/// Coefficient on the mapped domain, stored through the pre-image
/// correspondence: value at F(x) equals ρ(x).
#[derive(Clone, Debug, PartialEq)]
pub struct MappedCoefficient {
    pub vertex_values: Vec<f64>,
    pub element_values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct PulledBack {
    pub mesh: Mesh,
    pub coefficient: MappedCoefficient,
    /// Triangles were reordered because the map reverses orientation.
    pub orientation_reversed: bool,
}

fn check_map(mesh: &Mesh, map: &ConformalMap) -> Result<(), OracleError> {
    for p in mesh.vertices() {
        let d = det(&map.jacobian(*p)).abs().sqrt();
        if !(d >= 1e-10) {
            return Err(OracleError::MapSingular { x: p.x, y: p.y, derivative: d });
        }
    }
    Ok(())
}

/// Maps the mesh vertices through F and carries ρ along. `element_rho`
/// holds the per-element samples used by the original solve.
pub fn pullback_problem(
    mesh: &Mesh,
    rho: &crate::coefficient::CoefficientField,
    element_rho: &[f64],
    map: &ConformalMap,
) -> Result<PulledBack, OracleError> {
    check_map(mesh, map)?;
    let vertices: Vec<Point> = mesh.vertices().iter().map(|&p| map.apply(p)).collect();
    let mut reversed = false;
    let triangles: Vec<[usize; 3]> = mesh
        .triangles()
        .iter()
        .map(|&[a, b, c]| {
            if orient2d(vertices[a], vertices[b], vertices[c]) < 0.0 {
                reversed = true;
                [a, c, b]
            } else {
                [a, b, c]
            }
        })
        .collect();
    let h = triangles
        .iter()
        .flat_map(|t| (0..3).map(move |i| (t[i], t[(i + 1) % 3])))
        .map(|(a, b)| vertices[a].dist(vertices[b]))
        .fold(0.0, f64::max);
    let mapped = Mesh::new(vertices, triangles, mesh.boundary_edges().to_vec(), mesh.corner_vertex_ids().to_vec(), h)?;
    let vertex_values = mesh.vertices().iter().map(|&p| rho.eval(p)).collect::<Result<Vec<_>, _>>().map_err(FemError::from)?;
    Ok(PulledBack {
        mesh: mapped,
        coefficient: MappedCoefficient { vertex_values, element_values: element_rho.to_vec() },
        orientation_reversed: reversed,
    })
}

fn boundary_mask(mesh: &Mesh) -> Vec<bool> {
    let mut m = vec![false; mesh.vertices().len()];
    for e in mesh.boundary_edges() {
        m[e.v[0]] = true;
        m[e.v[1]] = true;
    }
    m
}

/// ‖r‖/‖b‖ over interior vertices, where r = K·u and b collects the boundary
/// columns of K.
fn residual_from_locals(mesh: &Mesh, values: &[f64], locals: impl Fn(usize) -> [[f64; 3]; 3]) -> f64 {
    let fixed = boundary_mask(mesh);
    let nv = mesh.vertices().len();
    let mut r = vec![0.0; nv];
    let mut b = vec![0.0; nv];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let k = locals(t);
        for i in 0..3 {
            if fixed[tri[i]] {
                continue;
            }
            for j in 0..3 {
                let v = k[i][j] * values[tri[j]];
                r[tri[i]] += v;
                if fixed[tri[j]] {
                    b[tri[i]] -= v;
                }
            }
        }
    }
    let rn = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    let bn = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if bn > 0.0 {
        rn / bn
    } else {
        rn
    }
}

/// Relative weak-form residual of a nodal field on its own mesh, boundary
/// vertices held fixed.
pub fn weak_form_residual(field: &SolutionField) -> f64 {
    let mesh = field.mesh();
    residual_from_locals(mesh, field.nodal_values(), |t| element_stiffness(mesh.triangle_points(t), field.element_rho()[t]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceCheck {
    pub map: String,
    pub residual: f64,
    pub tolerance: f64,
    pub orientation_preserved: bool,
    pub min_jacobian: f64,
    pub pass: bool,
}

const QUAD: [[f64; 3]; 3] = [[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0]];

/// Transplants the nodal values onto the image mesh and evaluates the weak
/// form there. Image elements are the curved sets F(T); their integrals are
/// computed on T through the Jacobian of F. Passes when the residual is at
/// most `tol` and F preserves orientation.
pub fn verify_invariance(original: &SolutionField, map: &ConformalMap, tol: f64) -> Result<InvarianceCheck, OracleError> {
    let mesh = original.mesh();
    check_map(mesh, map)?;
    let mut min_j = f64::INFINITY;
    let mut orientation = true;
    for p in mesh.vertices() {
        let d = det(&map.jacobian(*p));
        min_j = min_j.min(d);
    }
    let mut locals = Vec::with_capacity(mesh.triangles().len());
    for t in 0..mesh.triangles().len() {
        let pts = mesh.triangle_points(t);
        let rho = original.element_rho()[t];
        if let ConformalMap::Identity = map {
            locals.push(element_stiffness(pts, rho));
            continue;
        }
        let (g, area) = shape_gradients(pts);
        let mut k = [[0.0; 3]; 3];
        for w in QUAD {
            let q = pts[0] * w[0] + pts[1] * w[1] + pts[2] * w[2];
            let j = map.jacobian(q);
            let d = det(&j);
            min_j = min_j.min(d);
            // |det J| J⁻¹J⁻ᵀ
            let inv = [[j[1][1] / d, -j[0][1] / d], [-j[1][0] / d, j[0][0] / d]];
            let mut a = [[0.0; 2]; 2];
            for r in 0..2 {
                for c in 0..2 {
                    a[r][c] = d.abs() * (inv[r][0] * inv[c][0] + inv[r][1] * inv[c][1]);
                }
            }
            for i in 0..3 {
                for jj in 0..3 {
                    let aj = Point::new(a[0][0] * g[jj].x + a[0][1] * g[jj].y, a[1][0] * g[jj].x + a[1][1] * g[jj].y);
                    k[i][jj] += rho * area * aj.dot(g[i]) / 3.0;
                }
            }
        }
        locals.push(k);
    }
    if min_j <= 0.0 {
        orientation = false;
    }
    let residual = residual_from_locals(mesh, original.nodal_values(), |t| locals[t]);
    Ok(InvarianceCheck {
        map: map.name(),
        residual,
        tolerance: tol,
        orientation_preserved: orientation,
        min_jacobian: min_j,
        pass: residual <= tol && orientation,
    })
}

fn on_ray(r: f64, theta: f64) -> Point {
    // Exact coordinates on the axes.
    if theta == 0.0 {
        Point::new(r, 0.0)
    } else if theta == FRAC_PI_2 {
        Point::new(0.0, r)
    } else if theta == std::f64::consts::PI {
        Point::new(-r, 0.0)
    } else {
        Point::polar(r, theta)
    }
}

/// Delaunay mesh of the sector r_inner ≤ r ≤ r_outer, θ0 ≤ θ ≤ θ1 (at most
/// a half-plane wide) from concentric rings at spacing about `h`. The inner
/// arc is `hole:1` when r_inner > 0; everything else is exterior. The sector
/// corners are corner vertices.
pub fn sector_mesh(r_inner: f64, r_outer: f64, theta0: f64, theta1: f64, h: f64) -> Result<Mesh, OracleError> {
    if !(0.0 <= r_inner && r_inner < r_outer && theta0 < theta1 && theta1 - theta0 <= std::f64::consts::PI && h > 0.0) {
        return Err(OracleError::Invalid(format!("bad sector r in [{r_inner}, {r_outer}], theta in [{theta0}, {theta1}], h = {h}")));
    }
    let span = theta1 - theta0;
    let nr = ((r_outer - r_inner) / h).ceil().max(1.0) as usize;
    let mut pts = Vec::new();
    let mut corners = Vec::new();
    if r_inner == 0.0 {
        corners.push(0);
        pts.push(Point::ORIGIN);
    }
    for i in 0..=nr {
        let r = r_inner + (r_outer - r_inner) * i as f64 / nr as f64;
        if r == 0.0 {
            continue;
        }
        let nt = ((span * r / h).ceil() as usize).max(2);
        for j in 0..=nt {
            let theta = if j == nt { theta1 } else { theta0 + span * j as f64 / nt as f64 };
            if (i == 0 || i == nr) && (j == 0 || j == nt) {
                corners.push(pts.len());
            }
            pts.push(on_ray(r, theta));
        }
    }
    let tris: Vec<[usize; 3]> = triangulate(&pts)?
        .into_iter()
        .filter(|t| {
            let [a, b, c] = t.map(|v| pts[v]);
            orient2d(a, b, c) > 1e-12 * h * h && centroid(a, b, c).norm() > r_inner
        })
        .collect();
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for t in &tris {
        for i in 0..3 {
            let (a, b) = (t[i], t[(i + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let tol = 1e-9 * r_outer;
    let mut edges: Vec<BoundaryEdge> = count
        .into_iter()
        .filter(|&(_, c)| c == 1)
        .map(|((a, b), _)| {
            let inner = r_inner > 0.0 && (pts[a].norm() - r_inner).abs() < tol && (pts[b].norm() - r_inner).abs() < tol;
            BoundaryEdge { v: [a, b], marker: if inner { BoundaryMarker::Hole(1) } else { BoundaryMarker::Exterior } }
        })
        .collect();
    edges.sort_by_key(|e| e.v);
    Ok(Mesh::new(pts, tris, edges, corners, h)?)
}

/// Laplace problem on the quarter annulus 0.3 < r < 0.9, 0 < θ < π/2 with
/// boundary data from ln(r/0.9)/ln(1/3), which is also the exact solution.
pub fn quarter_annulus_problem(h: f64, tol: f64) -> Result<SolutionField, OracleError> {
    let mesh = Arc::new(sector_mesh(0.3, 0.9, 0.0, FRAC_PI_2, h)?);
    let exact = |p: Point| (p.norm() / 0.9).ln() / (1.0f64 / 3.0).ln();
    let fixed = boundary_mask(&mesh);
    let dirichlet = mesh.vertices().iter().zip(&fixed).map(|(&p, &f)| f.then(|| exact(p))).collect();
    let sys = assemble_general(&mesh, vec![1.0; mesh.triangles().len()], dirichlet, 1);
    Ok(solve(&sys, tol, None)?)
}

/// Quarter disc r < 1, 0 < θ < π/2 with u = 0 on both axes, u = sin 2θ on
/// the arc and ρ = 1 + x + 2y.
pub fn quarter_disc_problem(h: f64, tol: f64) -> Result<SolutionField, OracleError> {
    let mesh = Arc::new(sector_mesh(0.0, 1.0, 0.0, FRAC_PI_2, h)?);
    let fixed = boundary_mask(&mesh);
    let data = |p: Point| {
        let r2 = p.norm_sq();
        if p.x == 0.0 || p.y == 0.0 || r2 == 0.0 {
            0.0
        } else {
            2.0 * p.x * p.y / r2
        }
    };
    let dirichlet = mesh.vertices().iter().zip(&fixed).map(|(&p, &f)| f.then(|| data(p))).collect();
    let rho = (0..mesh.triangles().len())
        .map(|t| {
            let [a, b, c] = mesh.triangle_points(t);
            let g = centroid(a, b, c);
            1.0 + g.x + 2.0 * g.y
        })
        .collect();
    let sys = assemble_general(&mesh, rho, dirichlet, 1);
    Ok(solve(&sys, tol, None)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// The line x = 0; mirror (x, y) ↦ (−x, y).
    X,
    /// The line y = 0; mirror (x, y) ↦ (x, −y).
    Y,
}

impl Axis {
    fn coord(self, p: Point) -> f64 {
        match self {
            Axis::X => p.x,
            Axis::Y => p.y,
        }
    }

    pub fn mirror(self, p: Point) -> Point {
        match self {
            Axis::X => Point::new(-p.x, p.y),
            Axis::Y => Point::new(p.x, -p.y),
        }
    }
}

const TRACE_TOL: f64 = 1e-10;

fn key(p: Point) -> (u64, u64) {
    // +0.0 and -0.0 compare equal but differ in bits.
    ((p.x + 0.0).to_bits(), (p.y + 0.0).to_bits())
}

/// Odd extension of `field` across `axis`, with ρ extended evenly. A field
/// already defined on a mirror-symmetric mesh is returned unchanged once it
/// is checked to be odd.
pub fn odd_reflect(field: &SolutionField, axis: Axis) -> Result<SolutionField, OracleError> {
    let mesh = field.mesh();
    let u = field.nodal_values();
    let scale = mesh.bounding_box().diagonal();
    let tol = 1e-12 * scale;
    let side: Vec<i8> = mesh
        .vertices()
        .iter()
        .map(|&p| {
            let c = axis.coord(p);
            if c.abs() <= tol {
                0
            } else if c > 0.0 {
                1
            } else {
                -1
            }
        })
        .collect();
    let pos = side.iter().any(|&s| s > 0);
    let neg = side.iter().any(|&s| s < 0);
    if pos && neg {
        let index: HashMap<(u64, u64), usize> = mesh.vertices().iter().enumerate().map(|(i, &p)| (key(p), i)).collect();
        for (i, &p) in mesh.vertices().iter().enumerate() {
            let Some(&j) = index.get(&key(axis.mirror(p))) else {
                return Err(OracleError::Invalid(format!("vertex ({}, {}) has no mirror image", p.x, p.y)));
            };
            if (u[i] + u[j]).abs() > TRACE_TOL {
                return Err(OracleError::NonVanishingTrace { x: p.x, y: p.y, value: 0.5 * (u[i] + u[j]) });
            }
        }
        return Ok(field.clone());
    }
    let on_axis_edge = mesh.boundary_edges().iter().any(|e| side[e.v[0]] == 0 && side[e.v[1]] == 0);
    if !on_axis_edge {
        return Err(OracleError::Invalid("no boundary edge lies on the reflection axis".into()));
    }
    for (i, &p) in mesh.vertices().iter().enumerate() {
        if side[i] == 0 && u[i].abs() > TRACE_TOL {
            return Err(OracleError::NonVanishingTrace { x: p.x, y: p.y, value: u[i] });
        }
    }
    let nv = mesh.vertices().len();
    let mut vertices: Vec<Point> = mesh
        .vertices()
        .iter()
        .zip(&side)
        .map(|(&p, &s)| {
            if s == 0 {
                match axis {
                    Axis::X => Point::new(0.0, p.y),
                    Axis::Y => Point::new(p.x, 0.0),
                }
            } else {
                p
            }
        })
        .collect();
    let mut values: Vec<f64> = u.iter().zip(&side).map(|(&v, &s)| if s == 0 { 0.0 } else { v }).collect();
    let mut image = vec![0; nv];
    for i in 0..nv {
        if side[i] == 0 {
            image[i] = i;
        } else {
            image[i] = vertices.len();
            vertices.push(axis.mirror(vertices[i]));
            values.push(-values[i]);
        }
    }
    let mut triangles = mesh.triangles().to_vec();
    triangles.extend(mesh.triangles().iter().map(|&[a, b, c]| [image[a], image[c], image[b]]));
    let mut rho = field.element_rho().to_vec();
    rho.extend_from_slice(field.element_rho());
    let kept: Vec<BoundaryEdge> = mesh.boundary_edges().iter().filter(|e| !(side[e.v[0]] == 0 && side[e.v[1]] == 0)).copied().collect();
    let mut edges = kept.clone();
    edges.extend(kept.iter().map(|e| BoundaryEdge { v: [image[e.v[1]], image[e.v[0]]], marker: e.marker }));
    let is_boundary = |v: usize| edges.iter().any(|e| e.v.contains(&v));
    let mut corners: Vec<usize> = mesh.corner_vertex_ids().iter().copied().filter(|&c| is_boundary(c)).collect();
    let mirrored: Vec<usize> = corners.iter().map(|&c| image[c]).filter(|c| !corners.contains(c)).collect();
    corners.extend(mirrored);
    let doubled = Mesh::new(vertices, triangles, edges, corners, mesh.h())?;
    let mut out = SolutionField::from_nodal(Arc::new(doubled), values, rho);
    out.stats = field.stats;
    out.warnings = field.warnings.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_closed_form() {
        let e = RadialExact::new(0.05, 0.5, 1.0, 21.0).unwrap();
        assert!(e.a_minus < 0.0 && e.a_plus < 0.0);
        assert!((e.u(0.05).unwrap() - 1.0).abs() < 1e-14);
        assert!(e.u(1.0).unwrap().abs() < 1e-14);
        let left = 1.0 + e.a_minus * (e.r1 / e.r0).ln();
        assert!((left - e.a_plus * e.r1.ln()).abs() < 1e-12);
        assert!(matches!(e.u(0.01), Err(OracleError::OutOfRange { .. })));
        let h = RadialExact::new(0.05, 0.5, 2.0, 2.0).unwrap();
        assert!((h.a_minus - 1.0 / 0.05f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn halfplane_values() {
        assert!((halfplane_discontinuity_exact(0.05).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(halfplane_discontinuity_exact(1.0).unwrap(), 0.0);
        assert!((halfplane_discontinuity_exact(0.05f64.sqrt()).unwrap() - 0.5).abs() < 1e-14);
        assert!(halfplane_discontinuity_exact(1.5).is_err());
    }

    #[test]
    fn sector_meshes_are_valid() {
        let m = sector_mesh(0.3, 0.9, 0.0, FRAC_PI_2, 0.05).unwrap();
        assert_eq!(m.hole_count(), 1);
        assert_eq!(m.corner_vertex_ids().len(), 4);
        let exact = std::f64::consts::PI / 4.0 * (0.81 - 0.09);
        assert!((m.total_area() - exact).abs() / exact < 1e-2);
        let d = sector_mesh(0.0, 1.0, 0.0, FRAC_PI_2, 0.1).unwrap();
        assert_eq!(d.hole_count(), 0);
        assert_eq!(d.corner_vertex_ids().len(), 3);
    }

    #[test]
    fn square_maps_quarter_to_half_annulus() {
        let m = sector_mesh(0.3, 0.9, 0.0, FRAC_PI_2, 0.1).unwrap();
        let rho = crate::coefficient::CoefficientField::constant(1.0);
        let pb = pullback_problem(&m, &rho, &vec![1.0; m.triangles().len()], &ConformalMap::Square).unwrap();
        assert!(!pb.orientation_reversed);
        for p in pb.mesh.vertices() {
            let r = p.norm();
            assert!(r > 0.09 - 1e-12 && r < 0.81 + 1e-12 && p.y >= 0.0);
        }
    }

    #[test]
    fn singular_map_is_rejected() {
        let m = sector_mesh(0.0, 1.0, 0.0, FRAC_PI_2, 0.2).unwrap();
        let rho = crate::coefficient::CoefficientField::constant(1.0);
        let r = pullback_problem(&m, &rho, &vec![1.0; m.triangles().len()], &ConformalMap::Square);
        assert!(matches!(r, Err(OracleError::MapSingular { .. })));
    }
}
