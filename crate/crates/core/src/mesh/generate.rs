use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{triangulate, BoundaryEdge, BoundaryMarker, DomainSpec, Geometry, InterfaceCurve, Mesh, MeshError, OuterShape};
use crate::geometry::{centroid, orient2d, Point};

/// Fraction of `h` kept free around boundary and interface curves when
/// placing lattice points.
const CLEARANCE: f64 = 0.6;

/// Largest accepted ratio of `h` to the smallest hole radius.
pub const MAX_H_PER_HOLE_RADIUS: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshOptions {
    pub h: f64,
    /// Resolve the coefficient's discontinuity curve by mesh edges.
    pub align_interface: bool,
    /// Log-polar rings around holes much smaller than `h`.
    pub hole_grading: bool,
    pub min_hole_segments: usize,
    /// Rotation of the interior lattice, radians.
    pub lattice_angle: f64,
    /// Random lattice displacement as a fraction of `h`.
    pub jitter: f64,
    pub seed: u64,
    pub smoothing_sweeps: usize,
}

impl Default for MeshOptions {
    fn default() -> Self {
        MeshOptions {
            h: 0.05,
            align_interface: false,
            hole_grading: true,
            min_hole_segments: 32,
            lattice_angle: 0.0,
            jitter: 0.0,
            seed: 0,
            smoothing_sweeps: 3,
        }
    }
}

impl MeshOptions {
    pub fn with_h(h: f64) -> Self {
        MeshOptions { h, ..Default::default() }
    }
}

pub fn generate_mesh(spec: &DomainSpec, h: f64) -> Result<Mesh, MeshError> {
    generate_mesh_with(spec, &MeshOptions::with_h(h), None)
}

/// Generates a mesh; `interface` is only resolved when `align_interface` is set.
pub fn generate_mesh_with(spec: &DomainSpec, opts: &MeshOptions, interface: Option<InterfaceCurve>) -> Result<Mesh, MeshError> {
    spec.validate()?;
    let h = opts.h;
    if !(h.is_finite() && h > 0.0) {
        return Err(MeshError::InvalidDomain(format!("mesh size must be positive, got {h}")));
    }
    if let Some(min_r) = spec.holes.iter().map(|hl| hl.radius).reduce(f64::min) {
        if h > MAX_H_PER_HOLE_RADIUS * min_r {
            return Err(MeshError::InvalidDomain(format!(
                "mesh size {h} is too coarse for the smallest hole radius {min_r} (limit {})",
                MAX_H_PER_HOLE_RADIUS * min_r
            )));
        }
    }
    let r_out = spec.outer.radius();
    if h > r_out {
        return Err(MeshError::InvalidDomain(format!("mesh size {h} exceeds the outer radius {r_out}")));
    }
    if opts.min_hole_segments < 3 {
        return Err(MeshError::InvalidDomain("min_hole_segments must be at least 3".into()));
    }
    let interface = if opts.align_interface { interface } else { None };
    Generator::new(spec, opts, interface).run()
}

/// Which boundary curve a forced point lies on.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Feature {
    Outer,
    Hole(usize),
}

struct Generator<'a> {
    spec: &'a DomainSpec,
    opts: &'a MeshOptions,
    interface: Option<InterfaceCurve>,
    tol: f64,
    points: Vec<Point>,
    movable: Vec<bool>,
    boundary: Vec<(usize, usize, BoundaryMarker)>,
    interface_segs: Vec<(usize, usize)>,
    /// Exact forced points and their vertex ids once sampled.
    forced: Vec<(Feature, Point, Option<usize>)>,
}

impl<'a> Generator<'a> {
    fn new(spec: &'a DomainSpec, opts: &'a MeshOptions, interface: Option<InterfaceCurve>) -> Self {
        Generator {
            spec,
            opts,
            interface,
            tol: 1e-9 * spec.outer.radius(),
            points: Vec::new(),
            movable: Vec::new(),
            boundary: Vec::new(),
            interface_segs: Vec::new(),
            forced: Vec::new(),
        }
    }

    fn push(&mut self, p: Point, movable: bool) -> usize {
        self.points.push(p);
        self.movable.push(movable);
        self.points.len() - 1
    }

    fn run(mut self) -> Result<Mesh, MeshError> {
        let h = self.opts.h;
        for c in self.spec.all_corners() {
            self.add_forced(Feature::Outer, c);
        }
        let interface_pieces = self.interface_pieces()?;

        self.sample_outer();
        for k in 0..self.spec.holes.len() {
            self.sample_hole(k);
        }
        self.sample_interface(&interface_pieces);
        let zones = self.grade_holes();
        self.lattice(&zones);

        let tris = triangulate(&self.points).map_err(|e| MeshError::MeshFailure(e.to_string()))?;
        let mut tris: Vec<[usize; 3]> = tris
            .into_iter()
            .filter(|t| {
                let [a, b, c] = t.map(|v| self.points[v]);
                self.spec.contains(centroid(a, b, c))
            })
            .collect();
        self.check_edges(&tris)?;

        let constrained = self.constrained_edges();
        for _ in 0..self.opts.smoothing_sweeps {
            self.smooth(&tris);
        }
        lawson_flips(&self.points, &mut tris, &constrained);
        self.check_edges(&tris)?;

        // Drop vertices not used by any triangle.
        let mut used = vec![false; self.points.len()];
        for t in &tris {
            for &v in t {
                used[v] = true;
            }
        }
        let mut remap = vec![usize::MAX; self.points.len()];
        let mut vertices = Vec::with_capacity(self.points.len());
        for (i, p) in self.points.iter().enumerate() {
            if used[i] {
                remap[i] = vertices.len();
                vertices.push(*p);
            }
        }
        let triangles: Vec<[usize; 3]> = tris.iter().map(|t| t.map(|v| remap[v])).collect();
        let mut boundary = Vec::with_capacity(self.boundary.len());
        for &(a, b, m) in &self.boundary {
            if remap[a] == usize::MAX || remap[b] == usize::MAX {
                return Err(MeshError::MeshFailure(format!("boundary vertex lost on {m}")));
            }
            boundary.push(BoundaryEdge { v: [remap[a], remap[b]], marker: m });
        }
        let interface_edges: Vec<[usize; 2]> = self.interface_segs.iter().map(|&(a, b)| [remap[a], remap[b]]).collect();

        let mut corners = Vec::new();
        for c in self.spec.all_corners() {
            let id = self.forced.iter().find(|(_, p, _)| p.dist(c) <= self.tol).and_then(|f| f.2).map(|v| remap[v]);
            match id {
                Some(v) if v != usize::MAX => corners.push(v),
                _ => return Err(MeshError::MeshFailure(format!("corner ({}, {}) is not a mesh vertex", c.x, c.y))),
            }
        }

        let mesh = Mesh::new(vertices, triangles, boundary, corners, h)
            .map_err(|e| MeshError::MeshFailure(e.to_string()))?
            .with_interface_edges(interface_edges)?
            .with_geometry(Geometry { domain: self.spec.clone(), interface: self.interface })?;
        Ok(mesh)
    }

    fn add_forced(&mut self, feature: Feature, p: Point) {
        if self.forced.iter().any(|(f, q, _)| *f == feature && q.dist(p) <= self.tol) {
            return;
        }
        self.forced.push((feature, p, None));
    }

    /// Interface polylines as lists of exact end points; also registers the
    /// boundary crossings as forced points.
    fn interface_pieces(&mut self) -> Result<Vec<InterfacePiece>, MeshError> {
        let Some(curve) = self.interface else { return Ok(vec![]) };
        let spec = self.spec;
        match curve {
            InterfaceCurve::Circle { center, radius } => {
                if !(radius > 0.0 && center.is_finite()) {
                    return Err(MeshError::InvalidDomain("interface circle must have positive radius".into()));
                }
                let clear = spec.outer.inside_distance(center) > radius
                    && spec.holes.iter().all(|hl| {
                        let d = (hl.center - center).norm();
                        d > radius + hl.radius || d + hl.radius < radius
                    });
                if !clear {
                    return Err(MeshError::InvalidDomain("interface circle must not touch the boundary".into()));
                }
                Ok(vec![InterfacePiece::Circle { center, radius }])
            }
            InterfaceCurve::Line { y } => {
                let mut hits: Vec<(Feature, Point)> = Vec::new();
                let c = spec.outer.center();
                let r = spec.outer.radius();
                let dy = y - c.y;
                if dy.abs() < r {
                    let w = (r * r - dy * dy).sqrt();
                    for x in [c.x - w, c.x + w] {
                        let p = Point::new(x, y);
                        let keep = match spec.outer.half_plane() {
                            None => true,
                            Some(hp) => hp.signed_distance(p) > self.tol,
                        };
                        if keep {
                            hits.push((Feature::Outer, p));
                        }
                    }
                }
                if let Some([a, b]) = spec.outer.corners() {
                    if (a.y - b.y).abs() <= self.tol {
                        if (a.y - y).abs() <= self.tol {
                            return Err(MeshError::InvalidDomain("interface line coincides with the straight boundary".into()));
                        }
                    } else {
                        let t = (y - b.y) / (a.y - b.y);
                        if (0.0..=1.0).contains(&t) {
                            let p = if t <= 0.0 {
                                b
                            } else if t >= 1.0 {
                                a
                            } else {
                                b + (a - b) * t
                            };
                            hits.push((Feature::Outer, p));
                        }
                    }
                }
                for (k, hl) in spec.holes.iter().enumerate() {
                    let dy = y - hl.center.y;
                    if (dy.abs() - hl.radius).abs() <= self.tol {
                        return Err(MeshError::InvalidDomain(format!("interface line is tangent to hole {}", k + 1)));
                    }
                    if dy.abs() < hl.radius {
                        let w = (hl.radius * hl.radius - dy * dy).sqrt();
                        hits.push((Feature::Hole(k), Point::new(hl.center.x - w, y)));
                        hits.push((Feature::Hole(k), Point::new(hl.center.x + w, y)));
                    }
                }
                hits.sort_by(|a, b| a.1.x.total_cmp(&b.1.x));
                hits.dedup_by(|a, b| a.1.dist(b.1) <= self.tol);
                let mut pieces = Vec::new();
                for pair in hits.windows(2) {
                    let (fa, a) = pair[0];
                    let (fb, b) = pair[1];
                    if spec.contains(a.midpoint(b)) {
                        self.add_forced(fa, a);
                        self.add_forced(fb, b);
                        pieces.push(InterfacePiece::Segment { a, b });
                    }
                }
                Ok(pieces)
            }
        }
    }

    fn forced_on(&self, feature: Feature) -> Vec<Point> {
        self.forced.iter().filter(|f| f.0 == feature).map(|f| f.1).collect()
    }

    fn register(&mut self, p: Point, id: usize) {
        for f in &mut self.forced {
            if f.1.dist(p) <= self.tol {
                f.2 = Some(id);
            }
        }
    }

    /// Samples an arc from angle `a0` over `sweep` (ccw); returns the points
    /// from the start up to but excluding the end.
    fn arc_points(center: Point, radius: f64, a0: f64, sweep: f64, start: Point, forced: &[Point], spacing: f64) -> Vec<(Point, bool)> {
        let mut params: Vec<(f64, Point)> = forced
            .iter()
            .map(|&p| (((p - center).angle() - a0).rem_euclid(2.0 * PI), p))
            .filter(|(t, _)| *t > 1e-12 && *t < sweep - 1e-12)
            .collect();
        params.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out = vec![(start, true)];
        let mut prev = 0.0;
        let stops: Vec<(f64, Option<Point>)> = params.iter().map(|&(t, p)| (t, Some(p))).chain(std::iter::once((sweep, None))).collect();
        for (t, p) in stops {
            let n = ((radius * (t - prev)) / spacing).ceil().max(1.0) as usize;
            for i in 1..n {
                let a = a0 + prev + (t - prev) * i as f64 / n as f64;
                out.push((center + Point::polar(radius, a), false));
            }
            if let Some(p) = p {
                out.push((p, true));
            }
            prev = t;
        }
        out
    }

    fn sample_outer(&mut self) {
        let h = self.opts.h;
        let forced = self.forced_on(Feature::Outer);
        let mut loop_pts: Vec<(Point, bool)> = Vec::new();
        match self.spec.outer {
            OuterShape::Disc { center, radius } => {
                let (a0, start) = match forced.first() {
                    Some(&p) => ((p - center).angle(), p),
                    None => (0.0, center + Point::polar(radius, 0.0)),
                };
                loop_pts = Self::arc_points(center, radius, a0, 2.0 * PI, start, &forced, h);
            }
            OuterShape::HalfDisc { center, radius, .. } => {
                let [a, b] = self.spec.outer.corners().expect("validated");
                let hp = self.spec.outer.half_plane().expect("half disc");
                let a0 = (a - center).angle();
                let sweep = ((b - center).angle() - a0).rem_euclid(2.0 * PI);
                let on_arc: Vec<Point> = forced.iter().copied().filter(|p| hp.signed_distance(*p).abs() > self.tol).collect();
                loop_pts.extend(Self::arc_points(center, radius, a0, sweep, a, &on_arc, h));
                // Straight part from b back to a.
                let ab = a - b;
                let len = ab.norm();
                let mut params: Vec<(f64, Point)> = forced
                    .iter()
                    .filter(|p| hp.signed_distance(**p).abs() <= self.tol)
                    .map(|&p| ((p - b).dot(ab) / (len * len), p))
                    .filter(|(t, _)| *t > 1e-12 && *t < 1.0 - 1e-12)
                    .collect();
                params.sort_by(|x, y| x.0.total_cmp(&y.0));
                loop_pts.push((b, true));
                let mut prev = 0.0;
                let stops: Vec<(f64, Option<Point>)> =
                    params.iter().map(|&(t, p)| (t, Some(p))).chain(std::iter::once((1.0, None))).collect();
                for (t, p) in stops {
                    let n = ((len * (t - prev)) / h).ceil().max(1.0) as usize;
                    for i in 1..n {
                        let s = prev + (t - prev) * i as f64 / n as f64;
                        loop_pts.push((b + ab * s, false));
                    }
                    if let Some(p) = p {
                        loop_pts.push((p, true));
                    }
                    prev = t;
                }
            }
        }
        self.close_loop(loop_pts, BoundaryMarker::Exterior, false);
    }

    fn sample_hole(&mut self, k: usize) {
        let hole = self.spec.holes[k];
        let forced = self.forced_on(Feature::Hole(k));
        let n_min = self.opts.min_hole_segments as f64;
        let spacing = self.opts.h.min(2.0 * PI * hole.radius / n_min);
        let (a0, start) = match forced.first() {
            Some(&p) => ((p - hole.center).angle(), p),
            None => (0.0, hole.center + Point::polar(hole.radius, 0.0)),
        };
        let pts = Self::arc_points(hole.center, hole.radius, a0, 2.0 * PI, start, &forced, spacing);
        self.close_loop(pts, BoundaryMarker::Hole(k + 1), true);
    }

    /// Adds the loop vertices and edges; hole loops are reversed so the
    /// domain lies on the left.
    fn close_loop(&mut self, pts: Vec<(Point, bool)>, marker: BoundaryMarker, reverse: bool) {
        let ids: Vec<usize> = pts
            .into_iter()
            .map(|(p, is_forced)| {
                let id = self.push(p, false);
                if is_forced {
                    self.register(p, id);
                }
                id
            })
            .collect();
        let n = ids.len();
        for i in 0..n {
            let (a, b) = (ids[i], ids[(i + 1) % n]);
            if reverse {
                self.boundary.push((b, a, marker));
            } else {
                self.boundary.push((a, b, marker));
            }
        }
    }

    fn forced_id(&self, p: Point) -> usize {
        self.forced.iter().find(|f| f.1.dist(p) <= self.tol).and_then(|f| f.2).expect("interface end point was sampled on the boundary")
    }

    fn sample_interface(&mut self, pieces: &[InterfacePiece]) {
        let h = self.opts.h;
        for piece in pieces {
            match *piece {
                InterfacePiece::Circle { center, radius } => {
                    let n = ((2.0 * PI * radius / h).ceil() as usize).max(self.opts.min_hole_segments);
                    let ids: Vec<usize> =
                        (0..n).map(|i| self.push(center + Point::polar(radius, 2.0 * PI * i as f64 / n as f64), false)).collect();
                    for i in 0..n {
                        self.interface_segs.push((ids[i], ids[(i + 1) % n]));
                    }
                }
                InterfacePiece::Segment { a, b } => {
                    let ia = self.forced_id(a);
                    let ib = self.forced_id(b);
                    let n = ((b - a).norm() / h).ceil().max(1.0) as usize;
                    let mut prev = ia;
                    for i in 1..n {
                        let id = self.push(a + (b - a) * (i as f64 / n as f64), false);
                        self.interface_segs.push((prev, id));
                        prev = id;
                    }
                    self.interface_segs.push((prev, ib));
                }
            }
        }
    }

    /// Clearance from hole `k`'s centre to every other feature.
    fn hole_clearance(&self, k: usize) -> f64 {
        let c = self.spec.holes[k].center;
        let mut d = self.spec.outer.inside_distance(c);
        for (j, other) in self.spec.holes.iter().enumerate() {
            if j != k {
                d = d.min((other.center - c).norm() - other.radius);
            }
        }
        if let Some(curve) = self.interface {
            d = d.min(curve.distance(c));
        }
        d
    }

    /// Adds graded rings around small holes; returns the keep-out radius for
    /// the lattice around every hole.
    fn grade_holes(&mut self) -> Vec<f64> {
        let h = self.opts.h;
        let n = self.opts.min_hole_segments;
        let mut zones = Vec::with_capacity(self.spec.holes.len());
        for k in 0..self.spec.holes.len() {
            let hole = self.spec.holes[k];
            let mut zone = hole.radius;
            let has_forced = self.forced.iter().any(|f| f.0 == Feature::Hole(k));
            let s0 = 2.0 * PI * hole.radius / n as f64;
            if self.opts.hole_grading && !has_forced && s0 < 0.9 * h {
                let clearance = self.hole_clearance(k);
                let mut rho = hole.radius;
                let mut s = s0;
                let mut ring = 0usize;
                loop {
                    let next = rho + s * 3f64.sqrt() / 2.0;
                    let s_next = 2.0 * PI * next / n as f64;
                    if s_next > h || next + s_next + CLEARANCE * h > clearance {
                        break;
                    }
                    ring += 1;
                    let offset = if ring % 2 == 1 { PI / n as f64 } else { 0.0 };
                    for i in 0..n {
                        let a = offset + 2.0 * PI * i as f64 / n as f64;
                        self.push(hole.center + Point::polar(next, a), false);
                    }
                    rho = next;
                    s = s_next;
                }
                zone = rho;
            }
            zones.push(zone);
        }
        zones
    }

    fn lattice(&mut self, zones: &[f64]) {
        let h = self.opts.h;
        let bb = self.spec.outer.bounding_box();
        let center = bb.center();
        let half = 0.5 * bb.diagonal() + h;
        let dy = h * 3f64.sqrt() / 2.0;
        let ny = (half / dy).ceil() as i64;
        let nx = (half / h).ceil() as i64 + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
        for j in -ny..=ny {
            let shift = if j.rem_euclid(2) == 1 { 0.5 * h } else { 0.0 };
            for i in -nx..=nx {
                let local = Point::new(i as f64 * h + shift, j as f64 * dy);
                let mut p = center + local.rotated(self.opts.lattice_angle);
                if self.opts.jitter > 0.0 {
                    let r = self.opts.jitter * h * rng.gen::<f64>().sqrt();
                    let a = 2.0 * PI * rng.gen::<f64>();
                    p = p + Point::polar(r, a);
                }
                if !self.spec.contains(p) || self.spec.boundary_distance(p) < CLEARANCE * h {
                    continue;
                }
                if self.interface.is_some_and(|c| c.distance(p) < CLEARANCE * h) {
                    continue;
                }
                let in_zone = self.spec.holes.iter().zip(zones).any(|(hl, &z)| (p - hl.center).norm() < z + CLEARANCE * h);
                if in_zone {
                    continue;
                }
                self.push(p, true);
            }
        }
    }

    fn constrained_edges(&self) -> std::collections::HashSet<(usize, usize)> {
        self.boundary
            .iter()
            .map(|&(a, b, _)| (a.min(b), a.max(b)))
            .chain(self.interface_segs.iter().map(|&(a, b)| (a.min(b), a.max(b))))
            .collect()
    }

    /// Checks that every boundary and interface segment is a mesh edge and
    /// that no other edge lies on the boundary.
    fn check_edges(&self, tris: &[[usize; 3]]) -> Result<(), MeshError> {
        let mut count: HashMap<(usize, usize), u8> = HashMap::with_capacity(tris.len() * 2);
        for t in tris {
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        for &(a, b, m) in &self.boundary {
            if count.get(&(a.min(b), a.max(b))) != Some(&1) {
                let (p, q) = (self.points[a], self.points[b]);
                return Err(MeshError::MeshFailure(format!(
                    "boundary edge ({:.6}, {:.6})-({:.6}, {:.6}) on {m} was not recovered",
                    p.x, p.y, q.x, q.y
                )));
            }
        }
        let open = count.values().filter(|&&c| c == 1).count();
        if open != self.boundary.len() {
            return Err(MeshError::MeshFailure(format!("triangulation has {open} boundary edges, expected {}", self.boundary.len())));
        }
        for &(a, b) in &self.interface_segs {
            if count.get(&(a.min(b), a.max(b))) != Some(&2) {
                return Err(MeshError::MeshFailure("interface edge was not recovered".into()));
            }
        }
        Ok(())
    }

    /// One Gauss-Seidel sweep of Laplacian smoothing over lattice vertices.
    fn smooth(&mut self, tris: &[[usize; 3]]) {
        let n = self.points.len();
        let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut star: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (ti, t) in tris.iter().enumerate() {
            for i in 0..3 {
                let v = t[i];
                star[v].push(ti);
                for &w in &[t[(i + 1) % 3], t[(i + 2) % 3]] {
                    if !nbrs[v].contains(&w) {
                        nbrs[v].push(w);
                    }
                }
            }
        }
        for v in 0..n {
            if !self.movable[v] || nbrs[v].is_empty() {
                continue;
            }
            let mut s = Point::ORIGIN;
            for &w in &nbrs[v] {
                s = s + self.points[w];
            }
            let target = s * (1.0 / nbrs[v].len() as f64);
            let old = self.points[v];
            self.points[v] = target;
            let ok = star[v].iter().all(|&ti| {
                let [a, b, c] = tris[ti].map(|u| self.points[u]);
                orient2d(a, b, c) > 0.0
            }) && self.spec.contains(target);
            if !ok {
                self.points[v] = old;
            }
        }
    }
}

enum InterfacePiece {
    Circle { center: Point, radius: f64 },
    Segment { a: Point, b: Point },
}

fn robust_incircle(a: Point, b: Point, c: Point, d: Point) -> f64 {
    let k = |p: Point| robust::Coord { x: p.x, y: p.y };
    robust::incircle(k(a), k(b), k(c), k(d))
}

fn robust_orient(a: Point, b: Point, c: Point) -> f64 {
    let k = |p: Point| robust::Coord { x: p.x, y: p.y };
    robust::orient2d(k(a), k(b), k(c))
}

/// Restores the Delaunay property after smoothing, never flipping
/// constrained edges.
fn lawson_flips(points: &[Point], tris: &mut [[usize; 3]], constrained: &std::collections::HashSet<(usize, usize)>) {
    for _pass in 0..50 {
        let mut owner: HashMap<(usize, usize), usize> = HashMap::with_capacity(tris.len() * 3);
        for (ti, t) in tris.iter().enumerate() {
            for i in 0..3 {
                owner.insert((t[i], t[(i + 1) % 3]), ti);
            }
        }
        let mut touched = vec![false; tris.len()];
        let mut flips = 0;
        for t1 in 0..tris.len() {
            for i in 0..3 {
                if touched[t1] {
                    break;
                }
                let [a, b, c] = [tris[t1][i], tris[t1][(i + 1) % 3], tris[t1][(i + 2) % 3]];
                if constrained.contains(&(a.min(b), a.max(b))) {
                    continue;
                }
                let Some(&t2) = owner.get(&(b, a)) else { continue };
                if touched[t2] {
                    continue;
                }
                let d = tris[t2].iter().copied().find(|&v| v != a && v != b).expect("triangle");
                let [pa, pb, pc, pd] = [points[a], points[b], points[c], points[d]];
                if robust_incircle(pa, pb, pc, pd) > 0.0 && robust_orient(pa, pd, pc) > 0.0 && robust_orient(pd, pb, pc) > 0.0 {
                    tris[t1] = [a, d, c];
                    tris[t2] = [d, b, c];
                    touched[t1] = true;
                    touched[t2] = true;
                    flips += 1;
                }
            }
        }
        if flips == 0 {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::winding_number;
    use crate::mesh::HoleSpec;

    fn three_holes() -> DomainSpec {
        let holes =
            [0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0].iter().map(|&a| HoleSpec { center: Point::polar(0.5, a), radius: 0.01 }).collect();
        DomainSpec { outer: OuterShape::Disc { center: Point::ORIGIN, radius: 1.0 }, holes, corner_vertices: vec![] }
    }

    #[test]
    fn annulus_mesh_is_valid() {
        let m = generate_mesh(&DomainSpec::annulus(0.05, 1.0), 0.1).unwrap();
        assert_eq!(m.hole_count(), 1);
        for p in m.vertices() {
            let r = p.norm();
            assert!((0.05 - 1e-12..=1.0 + 1e-12).contains(&r), "radius {r}");
        }
        let area = PI * (1.0 - 0.05 * 0.05);
        assert!((m.total_area() - area).abs() / area < 0.02);
        for e in m.boundary_edges() {
            assert!(m.vertices()[e.v[0]].dist(m.vertices()[e.v[1]]) <= 0.1 + 1e-12);
        }
        assert_eq!(m.boundary_loops().len(), 2);
    }

    #[test]
    fn disc_without_holes() {
        let spec = DomainSpec { outer: OuterShape::Disc { center: Point::ORIGIN, radius: 1.0 }, holes: vec![], corner_vertices: vec![] };
        let m = generate_mesh(&spec, 0.2).unwrap();
        assert_eq!(m.hole_count(), 0);
        assert!(m.boundary_edges().iter().all(|e| e.marker == BoundaryMarker::Exterior));
    }

    #[test]
    fn hole_loops_enclose_their_centres() {
        let spec = three_holes();
        let m = generate_mesh(&spec, 0.05).unwrap();
        let loops = m.boundary_loops();
        assert_eq!(loops.len(), 4);
        for (marker, lp) in loops {
            let poly: Vec<Point> = lp.iter().map(|&v| m.vertices()[v]).collect();
            match marker {
                BoundaryMarker::Exterior => assert_eq!(winding_number(&poly, Point::ORIGIN), 1),
                BoundaryMarker::Hole(k) => {
                    // Domain on the left means clockwise around the hole.
                    for (j, hl) in spec.holes.iter().enumerate() {
                        let w = winding_number(&poly, hl.center);
                        assert_eq!(w, if j + 1 == k { -1 } else { 0 });
                    }
                }
            }
        }
    }

    #[test]
    fn half_disc_corners_are_vertices() {
        let spec = DomainSpec {
            outer: OuterShape::HalfDisc { center: Point::new(0.0, -1.0), radius: 2.0, normal: Point::new(0.0, 1.0), offset: -1.0 },
            holes: vec![HoleSpec { center: Point::ORIGIN, radius: 0.05 }],
            corner_vertices: vec![],
        };
        let m = generate_mesh(&spec, 0.1).unwrap();
        let corners: Vec<Point> = m.corner_vertex_ids().iter().map(|&v| m.vertices()[v]).collect();
        assert_eq!(corners.len(), 2);
        assert!(corners.contains(&Point::new(2.0, -1.0)));
        assert!(corners.contains(&Point::new(-2.0, -1.0)));
    }

    #[test]
    fn interface_edges_are_resolved() {
        let spec = DomainSpec::annulus(0.05, 1.0);
        let opts = MeshOptions { h: 0.05, align_interface: true, ..Default::default() };
        let m = generate_mesh_with(&spec, &opts, Some(InterfaceCurve::Circle { center: Point::ORIGIN, radius: 0.5 })).unwrap();
        assert!(!m.interface_edges().is_empty());
        for t in 0..m.triangles().len() {
            let [a, b, c] = m.triangle_points(t);
            let (ra, rb, rc) = (a.norm(), b.norm(), c.norm());
            let inside = ra < 0.5 - 1e-9 || rb < 0.5 - 1e-9 || rc < 0.5 - 1e-9;
            let outside = ra > 0.5 + 1e-9 || rb > 0.5 + 1e-9 || rc > 0.5 + 1e-9;
            assert!(!(inside && outside), "triangle {t} straddles the interface");
        }
        let m = generate_mesh_with(&spec, &opts, Some(InterfaceCurve::Line { y: 0.0 })).unwrap();
        assert!(m.interface_edges().len() >= 2 * (0.95f64 / 0.05).floor() as usize);
    }

    #[test]
    fn rejects_coarse_h() {
        let e = generate_mesh(&three_holes(), 0.06);
        assert!(matches!(e, Err(MeshError::InvalidDomain(_))));
    }
}
