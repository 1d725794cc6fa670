//! Conforming triangulations of discs and half-discs with circular holes.

mod delaunay;
mod generate;
pub mod io;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{orient2d, segment_distance, BoundingBox, Point};

pub use delaunay::{triangulate, DelaunayError};
pub use generate::{generate_mesh, generate_mesh_with, MeshOptions, MAX_H_PER_HOLE_RADIUS};

/// Sentinel for "no neighbouring triangle".
pub const NO_NEIGHBOR: usize = usize::MAX;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("mesh generation failed: {0}")]
    MeshFailure(String),
    #[error("mesh validation failed: {0}")]
    Validation(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Outer boundary of the domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OuterShape {
    Disc {
        center: Point,
        radius: f64,
    },
    /// The part of the disc where `normal . x > offset`.
    HalfDisc {
        center: Point,
        radius: f64,
        normal: Point,
        offset: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoleSpec {
    pub center: Point,
    pub radius: f64,
}

/// A disc or half-disc with disjoint circular holes removed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub outer: OuterShape,
    #[serde(default)]
    pub holes: Vec<HoleSpec>,
    /// Boundary points where the solution is expected to be critical.
    #[serde(default)]
    pub corner_vertices: Vec<Point>,
}

/// Curve along which a piecewise-constant coefficient jumps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InterfaceCurve {
    Circle {
        center: Point,
        radius: f64,
    },
    /// Horizontal line `y = y`.
    Line {
        y: f64,
    },
}

impl InterfaceCurve {
    pub fn distance(&self, p: Point) -> f64 {
        match *self {
            InterfaceCurve::Circle { center, radius } => ((p - center).norm() - radius).abs(),
            InterfaceCurve::Line { y } => (p.y - y).abs(),
        }
    }

    pub fn project(&self, p: Point) -> Point {
        match *self {
            InterfaceCurve::Circle { center, radius } => project_to_circle(p, center, radius),
            InterfaceCurve::Line { y } => Point::new(p.x, y),
        }
    }
}

fn project_to_circle(p: Point, center: Point, radius: f64) -> Point {
    let d = p - center;
    let r = d.norm();
    if r == 0.0 {
        return p;
    }
    center + d * (radius / r)
}

/// Half-plane `normal . x > offset` with unit normal.
#[derive(Clone, Copy, Debug)]
pub(crate) struct HalfPlane {
    pub normal: Point,
    pub offset: f64,
}

impl HalfPlane {
    fn signed_distance(&self, p: Point) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

impl OuterShape {
    pub fn center(&self) -> Point {
        match *self {
            OuterShape::Disc { center, .. } | OuterShape::HalfDisc { center, .. } => center,
        }
    }

    pub fn radius(&self) -> f64 {
        match *self {
            OuterShape::Disc { radius, .. } | OuterShape::HalfDisc { radius, .. } => radius,
        }
    }

    pub(crate) fn half_plane(&self) -> Option<HalfPlane> {
        match *self {
            OuterShape::Disc { .. } => None,
            OuterShape::HalfDisc { normal, offset, .. } => {
                let n = normal.norm();
                Some(HalfPlane { normal: normal * (1.0 / n), offset: offset / n })
            }
        }
    }

    /// Signed distance to the boundary, positive inside.
    pub fn inside_distance(&self, p: Point) -> f64 {
        let circ = self.radius() - (p - self.center()).norm();
        match self.half_plane() {
            None => circ,
            Some(hp) => circ.min(hp.signed_distance(p)),
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.inside_distance(p) > 0.0
    }

    /// The two points where the straight cut meets the circle, ordered so that
    /// the arc from the first to the second runs counterclockwise.
    pub fn corners(&self) -> Option<[Point; 2]> {
        let hp = self.half_plane()?;
        let c = self.center();
        let r = self.radius();
        let d = hp.offset - hp.normal.dot(c);
        if d.abs() >= r {
            return None;
        }
        let t = hp.normal.perp();
        let w = (r * r - d * d).sqrt();
        let foot = c + hp.normal * d;
        Some([foot - t * w, foot + t * w])
    }

    pub fn area(&self) -> f64 {
        let r = self.radius();
        match self.half_plane() {
            None => PI * r * r,
            Some(hp) => {
                let d = hp.offset - hp.normal.dot(self.center());
                // Area of the part of the disc beyond the chord at signed distance d.
                let alpha = (d / r).clamp(-1.0, 1.0).acos();
                r * r * alpha - d * (r * r - d * d).max(0.0).sqrt()
            }
        }
    }

    pub fn bounding_box(&self) -> BoundingBox {
        let c = self.center();
        let r = self.radius();
        BoundingBox { min: Point::new(c.x - r, c.y - r), max: Point::new(c.x + r, c.y + r) }
    }
}

impl DomainSpec {
    pub fn annulus(inner: f64, outer: f64) -> Self {
        DomainSpec {
            outer: OuterShape::Disc { center: Point::ORIGIN, radius: outer },
            holes: vec![HoleSpec { center: Point::ORIGIN, radius: inner }],
            corner_vertices: vec![],
        }
    }

    pub fn hole_count(&self) -> usize {
        self.holes.len()
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let bad = |m: String| Err(MeshError::InvalidDomain(m));
        let r = self.outer.radius();
        if !(r.is_finite() && r > 0.0) || !self.outer.center().is_finite() {
            return bad(format!("outer radius must be positive and finite, got {r}"));
        }
        if let OuterShape::HalfDisc { normal, offset, .. } = self.outer {
            if !(normal.is_finite() && normal.norm() > 0.0 && offset.is_finite()) {
                return bad("half-disc normal must be a nonzero finite vector".into());
            }
            if self.outer.corners().is_none() {
                return bad("half-plane does not cut the disc".into());
            }
        }
        for (k, hole) in self.holes.iter().enumerate() {
            if !(hole.radius.is_finite() && hole.radius > 0.0) || !hole.center.is_finite() {
                return bad(format!("hole {} has invalid radius {}", k + 1, hole.radius));
            }
            if self.outer.inside_distance(hole.center) <= hole.radius {
                return bad(format!("hole {} is not strictly inside the outer boundary", k + 1));
            }
            for (j, other) in self.holes.iter().enumerate().take(k) {
                if (hole.center - other.center).norm() <= hole.radius + other.radius {
                    return bad(format!("holes {} and {} overlap", j + 1, k + 1));
                }
            }
        }
        let tol = 1e-9 * r;
        for c in &self.corner_vertices {
            if self.outer_boundary_distance(*c) > tol {
                return bad(format!("corner vertex ({}, {}) is not on the outer boundary", c.x, c.y));
            }
        }
        Ok(())
    }

    /// Distance from `p` to the outer boundary curve.
    pub fn outer_boundary_distance(&self, p: Point) -> f64 {
        let c = self.outer.center();
        let r = self.outer.radius();
        match (self.outer.half_plane(), self.outer.corners()) {
            (Some(hp), Some([a, b])) => {
                let seg = segment_distance(p, b, a);
                // Arc part: points of the circle on the kept side.
                let q = project_to_circle(p, c, r);
                let arc = if hp.signed_distance(q) >= 0.0 { p.dist(q) } else { p.dist(a).min(p.dist(b)) };
                seg.min(arc)
            }
            _ => ((p - c).norm() - r).abs(),
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.outer.contains(p) && self.holes.iter().all(|h| (p - h.center).norm() > h.radius)
    }

    /// Distance from an interior point to the nearest boundary curve.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        let mut d = self.outer_boundary_distance(p);
        for h in &self.holes {
            d = d.min(((p - h.center).norm() - h.radius).abs());
        }
        d
    }

    pub fn area(&self) -> f64 {
        self.outer.area() - self.holes.iter().map(|h| PI * h.radius * h.radius).sum::<f64>()
    }

    /// Geometric corners of the outer boundary plus the declared corner vertices.
    pub fn all_corners(&self) -> Vec<Point> {
        let mut out: Vec<Point> = self.outer.corners().map(|c| c.to_vec()).unwrap_or_default();
        let tol = 1e-9 * self.outer.radius();
        for c in &self.corner_vertices {
            if out.iter().all(|o| o.dist(*c) > tol) {
                out.push(*c);
            }
        }
        out
    }

    /// Projects the midpoint `m` of boundary edge `(a, b)` onto the analytic
    /// boundary curve of `marker`.
    pub fn project_boundary_midpoint(&self, marker: BoundaryMarker, a: Point, b: Point, m: Point) -> Point {
        match marker {
            BoundaryMarker::Hole(k) => match self.holes.get(k - 1) {
                Some(h) => project_to_circle(m, h.center, h.radius),
                None => m,
            },
            BoundaryMarker::Exterior => {
                let c = self.outer.center();
                let r = self.outer.radius();
                if let Some(hp) = self.outer.half_plane() {
                    let tol = 1e-9 * r;
                    if hp.signed_distance(a).abs() <= tol && hp.signed_distance(b).abs() <= tol {
                        return m;
                    }
                }
                project_to_circle(m, c, r)
            }
        }
    }

    /// Distance from `p` to the analytic curve carrying `marker`.
    pub fn marker_distance(&self, marker: BoundaryMarker, p: Point) -> f64 {
        match marker {
            BoundaryMarker::Hole(k) => match self.holes.get(k - 1) {
                Some(h) => ((p - h.center).norm() - h.radius).abs(),
                None => f64::INFINITY,
            },
            BoundaryMarker::Exterior => self.outer_boundary_distance(p),
        }
    }

    /// The same domain rotated by `theta` about the origin.
    pub fn rotated(&self, theta: f64) -> DomainSpec {
        let outer = match self.outer {
            OuterShape::Disc { center, radius } => OuterShape::Disc { center: center.rotated(theta), radius },
            OuterShape::HalfDisc { center, radius, normal, offset } => {
                OuterShape::HalfDisc { center: center.rotated(theta), radius, normal: normal.rotated(theta), offset }
            }
        };
        DomainSpec {
            outer,
            holes: self.holes.iter().map(|h| HoleSpec { center: h.center.rotated(theta), radius: h.radius }).collect(),
            corner_vertices: self.corner_vertices.iter().map(|c| c.rotated(theta)).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoundaryMarker {
    Exterior,
    /// 1-based hole number.
    Hole(usize),
}

impl fmt::Display for BoundaryMarker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryMarker::Exterior => write!(f, "ext"),
            BoundaryMarker::Hole(k) => write!(f, "hole:{k}"),
        }
    }
}

/// A boundary edge `v[0] -> v[1]`, oriented with the domain on its left.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub v: [usize; 2],
    pub marker: BoundaryMarker,
}

/// Analytic description a mesh was generated from.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub domain: DomainSpec,
    pub interface: Option<InterfaceCurve>,
}

/// Immutable conforming triangulation with boundary markers.
#[derive(Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    corner_vertex_ids: Vec<usize>,
    interface_edges: Vec<[usize; 2]>,
    h: f64,
    geometry: Option<Geometry>,
    warnings: Vec<String>,
    neighbors: Vec<[usize; 3]>,
    /// Triangle on the left of each boundary edge.
    boundary_triangle: Vec<usize>,
    hole_count: usize,
    locator: OnceLock<Locator>,
}

impl Clone for Mesh {
    fn clone(&self) -> Self {
        Mesh {
            vertices: self.vertices.clone(),
            triangles: self.triangles.clone(),
            boundary_edges: self.boundary_edges.clone(),
            corner_vertex_ids: self.corner_vertex_ids.clone(),
            interface_edges: self.interface_edges.clone(),
            h: self.h,
            geometry: self.geometry.clone(),
            warnings: self.warnings.clone(),
            neighbors: self.neighbors.clone(),
            boundary_triangle: self.boundary_triangle.clone(),
            hole_count: self.hole_count,
            locator: OnceLock::new(),
        }
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl Mesh {
    /// Builds and validates a mesh. Boundary edges may be given in either
    /// direction; they are stored with the domain on their left.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        corner_vertex_ids: Vec<usize>,
        h: f64,
    ) -> Result<Mesh, MeshError> {
        let invalid = |m: String| Err(MeshError::Validation(m));
        let nv = vertices.len();
        if let Some(i) = vertices.iter().position(|p| !p.is_finite()) {
            return invalid(format!("vertex {i} has a non-finite coordinate"));
        }
        if !(h.is_finite() && h > 0.0) {
            return invalid(format!("mesh size must be positive, got {h}"));
        }
        if triangles.is_empty() {
            return invalid("mesh has no triangles".into());
        }
        // (triangle, local edge index) per directed edge
        let mut directed: HashMap<(usize, usize), (usize, usize)> = HashMap::with_capacity(3 * triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return invalid(format!("triangle {t} references a vertex out of range (have {nv})"));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return invalid(format!("triangle {t} repeats a vertex"));
            }
            let [a, b, c] = tri.map(|v| vertices[v]);
            if orient2d(a, b, c) <= 0.0 {
                return invalid(format!("triangle {t} is not counterclockwise or has zero area"));
            }
            for i in 0..3 {
                let e = (tri[(i + 1) % 3], tri[(i + 2) % 3]);
                if directed.insert(e, (t, i)).is_some() {
                    return invalid(format!("edge {}-{} is used twice with the same orientation", e.0, e.1));
                }
            }
        }
        let mut neighbors = vec![[NO_NEIGHBOR; 3]; triangles.len()];
        let mut open: HashMap<(usize, usize), (usize, usize, usize)> = HashMap::new();
        for (&(a, b), &(t, i)) in &directed {
            match directed.get(&(b, a)) {
                Some(&(u, _)) => neighbors[t][i] = u,
                None => {
                    open.insert(edge_key(a, b), (a, b, t));
                }
            }
        }
        if boundary_edges.len() != open.len() {
            return invalid(format!(
                "{} boundary edges declared but the triangulation has {} edges with a single triangle",
                boundary_edges.len(),
                open.len()
            ));
        }
        let mut oriented = Vec::with_capacity(boundary_edges.len());
        let mut boundary_triangle = Vec::with_capacity(boundary_edges.len());
        let mut seen = std::collections::HashSet::new();
        let mut max_hole = 0;
        for e in &boundary_edges {
            let key = edge_key(e.v[0], e.v[1]);
            let Some(&(a, b, t)) = open.get(&key) else {
                return invalid(format!("declared boundary edge {}-{} is not on the mesh boundary", e.v[0], e.v[1]));
            };
            if !seen.insert(key) {
                return invalid(format!("boundary edge {}-{} declared twice", e.v[0], e.v[1]));
            }
            if let BoundaryMarker::Hole(k) = e.marker {
                if k == 0 {
                    return invalid("hole markers are numbered from 1".into());
                }
                max_hole = max_hole.max(k);
            }
            oriented.push(BoundaryEdge { v: [a, b], marker: e.marker });
            boundary_triangle.push(t);
        }
        for k in 1..=max_hole {
            if !oriented.iter().any(|e| e.marker == BoundaryMarker::Hole(k)) {
                return invalid(format!("hole markers are not contiguous: hole:{k} missing"));
            }
        }
        for &c in &corner_vertex_ids {
            if c >= nv {
                return invalid(format!("corner vertex {c} out of range"));
            }
            if !oriented.iter().any(|e| e.v.contains(&c)) {
                return invalid(format!("corner vertex {c} is not a boundary vertex"));
            }
        }
        Ok(Mesh {
            vertices,
            triangles,
            boundary_edges: oriented,
            corner_vertex_ids,
            interface_edges: Vec::new(),
            h,
            geometry: None,
            warnings: Vec::new(),
            neighbors,
            boundary_triangle,
            hole_count: max_hole,
            locator: OnceLock::new(),
        })
    }

    /// Attaches the analytic geometry and checks boundary vertices against it
    /// with tolerance `h^2`.
    pub fn with_geometry(mut self, geometry: Geometry) -> Result<Mesh, MeshError> {
        let tol = (self.h * self.h).max(1e-12 * geometry.domain.outer.radius());
        for e in &self.boundary_edges {
            for &v in &e.v {
                let d = geometry.domain.marker_distance(e.marker, self.vertices[v]);
                if d > tol {
                    return Err(MeshError::Validation(format!("boundary vertex {v} ({}) is {d:.3e} away from its curve", e.marker)));
                }
            }
        }
        if geometry.domain.hole_count() != self.hole_count {
            return Err(MeshError::Validation(format!(
                "geometry has {} holes but the mesh boundary has {}",
                geometry.domain.hole_count(),
                self.hole_count
            )));
        }
        self.geometry = Some(geometry);
        Ok(self)
    }

    pub fn with_interface_edges(mut self, edges: Vec<[usize; 2]>) -> Result<Mesh, MeshError> {
        let interior: std::collections::HashSet<(usize, usize)> =
            self.triangles.iter().flat_map(|t| (0..3).map(move |i| edge_key(t[i], t[(i + 1) % 3]))).collect();
        for e in &edges {
            if !interior.contains(&edge_key(e[0], e[1])) {
                return Err(MeshError::Validation(format!("interface edge {}-{} is not a mesh edge", e[0], e[1])));
            }
        }
        self.interface_edges = edges;
        Ok(self)
    }

    pub(crate) fn with_warnings(mut self, warnings: Vec<String>) -> Mesh {
        self.warnings.extend(warnings);
        self
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn corner_vertex_ids(&self) -> &[usize] {
        &self.corner_vertex_ids
    }

    pub fn interface_edges(&self) -> &[[usize; 2]] {
        &self.interface_edges
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn geometry(&self) -> Option<&Geometry> {
        self.geometry.as_ref()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Number of holes `M`.
    pub fn hole_count(&self) -> usize {
        self.hole_count
    }

    /// `neighbors()[t][i]` is the triangle across the edge opposite local
    /// vertex `i`, or [`NO_NEIGHBOR`].
    pub fn neighbors(&self) -> &[[usize; 3]] {
        &self.neighbors
    }

    /// Triangle adjacent to each boundary edge (same order as `boundary_edges`).
    pub fn boundary_triangles(&self) -> &[usize] {
        &self.boundary_triangle
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * orient2d(a, b, c)
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangle_points(t);
        crate::geometry::centroid(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Boundary marker per vertex (`None` for interior vertices).
    pub fn vertex_markers(&self) -> Vec<Option<BoundaryMarker>> {
        let mut out = vec![None; self.vertices.len()];
        for e in &self.boundary_edges {
            for &v in &e.v {
                out[v] = Some(e.marker);
            }
        }
        out
    }

    /// All undirected edges, each listed once with the smaller index first.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut out = Vec::with_capacity(self.triangles.len() * 3 / 2 + self.boundary_edges.len());
        for (t, tri) in self.triangles.iter().enumerate() {
            for i in 0..3 {
                let (a, b) = (tri[(i + 1) % 3], tri[(i + 2) % 3]);
                let nb = self.neighbors[t][i];
                if nb == NO_NEIGHBOR || t < nb {
                    out.push([a.min(b), a.max(b)]);
                }
            }
        }
        out
    }

    /// Incident triangles per vertex, in increasing triangle order.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                out[v].push(t);
            }
        }
        out
    }

    /// One-ring vertex neighbours, sorted.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for e in self.edges() {
            out[e[0]].push(e[1]);
            out[e[1]].push(e[0]);
        }
        for n in &mut out {
            n.sort_unstable();
        }
        out
    }

    /// Closed boundary loops, each traversed with the domain on the left.
    pub fn boundary_loops(&self) -> Vec<(BoundaryMarker, Vec<usize>)> {
        let mut next: HashMap<usize, usize> = HashMap::new();
        let mut marker_of: HashMap<usize, BoundaryMarker> = HashMap::new();
        for e in &self.boundary_edges {
            next.insert(e.v[0], e.v[1]);
            marker_of.insert(e.v[0], e.marker);
        }
        let mut starts: Vec<usize> = next.keys().copied().collect();
        starts.sort_unstable();
        let mut visited = std::collections::HashSet::new();
        let mut loops = Vec::new();
        for s in starts {
            if visited.contains(&s) {
                continue;
            }
            let mut lp = vec![s];
            visited.insert(s);
            let mut cur = s;
            while let Some(&n) = next.get(&cur) {
                if n == s || !visited.insert(n) {
                    break;
                }
                lp.push(n);
                cur = n;
            }
            loops.push((marker_of[&s], lp));
        }
        loops
    }

    /// Distance from `p` to the nearest boundary edge.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        self.boundary_edges.iter().map(|e| segment_distance(p, self.vertices[e.v[0]], self.vertices[e.v[1]])).fold(f64::INFINITY, f64::min)
    }

    pub fn bounding_box(&self) -> BoundingBox {
        BoundingBox::of(self.vertices.iter().copied()).expect("mesh has vertices")
    }

    /// The triangle containing `p` (lowest index on shared edges and vertices).
    pub fn locate(&self, p: Point) -> Option<usize> {
        self.locator.get_or_init(|| Locator::build(self)).locate(self, p)
    }

    /// Barycentric coordinates of `p` in triangle `t`.
    pub fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let [a, b, c] = self.triangle_points(t);
        let area = orient2d(a, b, c);
        [orient2d(p, b, c) / area, orient2d(a, p, c) / area, orient2d(a, b, p) / area]
    }

    /// Uniform refinement: every triangle is split into four through its edge
    /// midpoints. Boundary and interface midpoints are projected onto their
    /// analytic curves when the geometry is known.
    pub fn refine(&self) -> Result<Mesh, MeshError> {
        let mut vertices = self.vertices.clone();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::with_capacity(self.triangles.len() * 2);
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
            *mid.entry(edge_key(a, b)).or_insert_with(|| {
                vertices.push(vertices[a].midpoint(vertices[b]));
                vertices.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(self.triangles.len() * 4);
        for &[a, b, c] in &self.triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            triangles.push([a, ab, ca]);
            triangles.push([ab, b, bc]);
            triangles.push([ca, bc, c]);
            triangles.push([ab, bc, ca]);
        }
        let mut boundary = Vec::with_capacity(self.boundary_edges.len() * 2);
        for e in &self.boundary_edges {
            let [a, b] = e.v;
            let m = midpoint(a, b, &mut vertices);
            if let Some(g) = &self.geometry {
                vertices[m] = g.domain.project_boundary_midpoint(e.marker, vertices[a], vertices[b], vertices[m]);
            }
            boundary.push(BoundaryEdge { v: [a, m], marker: e.marker });
            boundary.push(BoundaryEdge { v: [m, b], marker: e.marker });
        }
        let mut interface = Vec::with_capacity(self.interface_edges.len() * 2);
        for &[a, b] in &self.interface_edges {
            let m = midpoint(a, b, &mut vertices);
            if let Some(curve) = self.geometry.as_ref().and_then(|g| g.interface) {
                vertices[m] = curve.project(vertices[m]);
            }
            interface.push([a, m]);
            interface.push([m, b]);
        }
        let mut out = Mesh::new(vertices, triangles, boundary, self.corner_vertex_ids.clone(), 0.5 * self.h)?
            .with_interface_edges(interface)?
            .with_warnings(self.warnings.clone());
        if let Some(g) = &self.geometry {
            out = out.with_geometry(g.clone())?;
        }
        Ok(out)
    }

    /// A copy with every vertex mapped through `f`. Triangles that end up
    /// clockwise are reoriented; the count of reoriented triangles is returned.
    pub fn map_vertices(&self, f: impl Fn(Point) -> Point) -> Result<(Mesh, usize), MeshError> {
        let vertices: Vec<Point> = self.vertices.iter().map(|&p| f(p)).collect();
        let mut flipped = 0;
        let triangles: Vec<[usize; 3]> = self
            .triangles
            .iter()
            .map(|&[a, b, c]| {
                if orient2d(vertices[a], vertices[b], vertices[c]) < 0.0 {
                    flipped += 1;
                    [a, c, b]
                } else {
                    [a, b, c]
                }
            })
            .collect();
        let mesh = Mesh::new(vertices, triangles, self.boundary_edges.clone(), self.corner_vertex_ids.clone(), self.h)?
            .with_interface_edges(self.interface_edges.clone())?;
        Ok((mesh, flipped))
    }
}

/// Uniform bucket grid over triangle bounding boxes.
#[derive(Debug)]
struct Locator {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    start: Vec<usize>,
    items: Vec<usize>,
}

impl Locator {
    fn build(mesh: &Mesh) -> Locator {
        let bb = mesh.bounding_box();
        let nt = mesh.triangles.len().max(1);
        let area = (bb.width() * bb.height()).max(f64::MIN_POSITIVE);
        let cell = (2.0 * area / nt as f64).sqrt().max(1e-12 * bb.diagonal().max(1e-300));
        let nx = ((bb.width() / cell).ceil() as usize).clamp(1, 4096);
        let ny = ((bb.height() / cell).ceil() as usize).clamp(1, 4096);
        let cell = (bb.width() / nx as f64).max(bb.height() / ny as f64).max(cell);
        let cell_of = |x: f64, y: f64| -> (usize, usize) {
            let i = (((x - bb.min.x) / cell).floor().max(0.0) as usize).min(nx - 1);
            let j = (((y - bb.min.y) / cell).floor().max(0.0) as usize).min(ny - 1);
            (i, j)
        };
        let mut counts = vec![0usize; nx * ny + 1];
        let ranges: Vec<((usize, usize), (usize, usize))> = (0..mesh.triangles.len())
            .map(|t| {
                let tb = BoundingBox::of(mesh.triangle_points(t)).expect("3 points");
                (cell_of(tb.min.x, tb.min.y), cell_of(tb.max.x, tb.max.y))
            })
            .collect();
        for &((i0, j0), (i1, j1)) in &ranges {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    counts[j * nx + i + 1] += 1;
                }
            }
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let mut fill = counts.clone();
        let mut items = vec![0; counts[nx * ny]];
        for (t, &((i0, j0), (i1, j1))) in ranges.iter().enumerate() {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let c = j * nx + i;
                    items[fill[c]] = t;
                    fill[c] += 1;
                }
            }
        }
        Locator { origin: bb.min, cell, nx, ny, start: counts, items }
    }

    fn locate(&self, mesh: &Mesh, p: Point) -> Option<usize> {
        let fx = (p.x - self.origin.x) / self.cell;
        let fy = (p.y - self.origin.y) / self.cell;
        if !(fx.is_finite() && fy.is_finite()) {
            return None;
        }
        let eps = 1e-9;
        if fx < -eps || fy < -eps || fx > self.nx as f64 + eps || fy > self.ny as f64 + eps {
            return None;
        }
        let i = (fx.floor().max(0.0) as usize).min(self.nx - 1);
        let j = (fy.floor().max(0.0) as usize).min(self.ny - 1);
        let c = j * self.nx + i;
        // Candidates are stored in increasing triangle order.
        self.items[self.start[c]..self.start[c + 1]].iter().copied().find(|&t| {
            let l = mesh.barycentric(t, p);
            l.iter().all(|&x| x >= -1e-12)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_square() -> Mesh {
        let v = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)];
        let t = vec![[0, 1, 2], [0, 2, 3]];
        let b = (0..4).map(|i| BoundaryEdge { v: [i, (i + 1) % 4], marker: BoundaryMarker::Exterior }).collect();
        Mesh::new(v, t, b, vec![], 1.0).unwrap()
    }

    #[test]
    fn locate_prefers_lower_index_on_shared_edge() {
        let m = unit_square();
        assert_eq!(m.locate(Point::new(0.5, 0.5)), Some(0));
        assert_eq!(m.locate(Point::new(0.9, 0.2)), Some(0));
        assert_eq!(m.locate(Point::new(0.1, 0.8)), Some(1));
        assert_eq!(m.locate(Point::new(1.5, 0.5)), None);
    }

    #[test]
    fn refine_counts_follow_euler() {
        let m = unit_square();
        let r = m.refine().unwrap();
        let e = m.edges().len();
        assert_eq!(r.triangles().len(), 4 * m.triangles().len());
        assert_eq!(r.vertices().len(), m.vertices().len() + e);
        assert_eq!(r.boundary_edges().len(), 2 * m.boundary_edges().len());
        assert!((r.total_area() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_boundary_declaration() {
        let v = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        let e = Mesh::new(v, vec![[0, 1, 2]], vec![BoundaryEdge { v: [0, 1], marker: BoundaryMarker::Exterior }], vec![], 1.0);
        assert!(matches!(e, Err(MeshError::Validation(_))));
    }

    #[test]
    fn half_disc_corners_and_area() {
        let outer = OuterShape::HalfDisc { center: Point::new(0.0, -1.0), radius: 2.0, normal: Point::new(0.0, 1.0), offset: -1.0 };
        let [a, b] = outer.corners().unwrap();
        assert!(a.dist(Point::new(2.0, -1.0)) < 1e-15);
        assert!(b.dist(Point::new(-2.0, -1.0)) < 1e-15);
        assert!((outer.area() - 2.0 * PI).abs() < 1e-12);
        assert!(outer.contains(Point::new(0.0, 0.0)));
        assert!(!outer.contains(Point::new(0.0, -1.5)));
    }

    #[test]
    fn domain_validation_catches_overlaps() {
        let mut d = DomainSpec::annulus(0.05, 1.0);
        d.holes.push(HoleSpec { center: Point::new(0.08, 0.0), radius: 0.05 });
        assert!(matches!(d.validate(), Err(MeshError::InvalidDomain(_))));
        let mut d = DomainSpec::annulus(0.05, 1.0);
        d.holes[0].center = Point::new(0.97, 0.0);
        assert!(matches!(d.validate(), Err(MeshError::InvalidDomain(_))));
        assert!(DomainSpec::annulus(0.05, 1.0).validate().is_ok());
    }
}
