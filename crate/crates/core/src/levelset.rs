//! Level lines by marching triangles, and connected components of sub- and
//! super-level sets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::fem::SolutionField;
use crate::geometry::{polygon_area, Point};
use crate::mesh::{BoundaryMarker, Mesh, NO_NEIGHBOR};

/// Shift applied to nodal values that hit the level exactly.
pub const EXACT_HIT_SHIFT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Ccw,
    Cw,
    Open,
}

/// Oriented polyline. Closed polylines do not repeat their first point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourPolyline {
    pub points: Vec<Point>,
    pub closed: bool,
    pub level: f64,
    pub orientation: Orientation,
    /// Triangle crossed by segment `k` (from point `k` to `k + 1`), when the
    /// polyline was extracted from a mesh.
    #[serde(skip)]
    pub segment_triangles: Vec<usize>,
}

impl ContourPolyline {
    /// Counterclockwise circle sampled at `n` points.
    pub fn circle(center: Point, radius: f64, n: usize) -> Self {
        let points = (0..n).map(|k| center + Point::polar(radius, 2.0 * std::f64::consts::PI * k as f64 / n as f64)).collect();
        ContourPolyline { points, closed: true, level: f64::NAN, orientation: Orientation::Ccw, segment_triangles: vec![] }
    }

    pub fn closed_from(points: Vec<Point>) -> Self {
        let orientation = if polygon_area(&points) >= 0.0 { Orientation::Ccw } else { Orientation::Cw };
        ContourPolyline { points, closed: true, level: f64::NAN, orientation, segment_triangles: vec![] }
    }

    pub fn signed_area(&self) -> f64 {
        polygon_area(&self.points)
    }

    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        let mut segment_triangles = self.segment_triangles.clone();
        if self.closed && !segment_triangles.is_empty() {
            // Segment k of the reversed loop runs from old n-1-k to old n-2-k.
            segment_triangles.reverse();
            segment_triangles.rotate_left(1);
        } else {
            segment_triangles.reverse();
        }
        let orientation = match self.orientation {
            Orientation::Ccw => Orientation::Cw,
            Orientation::Cw => Orientation::Ccw,
            Orientation::Open => Orientation::Open,
        };
        ContourPolyline { points, closed: self.closed, level: self.level, orientation, segment_triangles }
    }

    /// The closed polyline through the segment midpoints.
    pub fn midpoint_loop(&self) -> Vec<Point> {
        let n = self.points.len();
        let segs = if self.closed { n } else { n.saturating_sub(1) };
        (0..segs).map(|k| self.points[k].midpoint(self.points[(k + 1) % n])).collect()
    }

    pub fn length(&self) -> f64 {
        let n = self.points.len();
        let segs = if self.closed { n } else { n.saturating_sub(1) };
        (0..segs).map(|k| self.points[k].dist(self.points[(k + 1) % n])).sum()
    }
}

/// Nodal values with exact hits of `level` nudged upwards.
fn perturbed(values: &[f64], level: f64) -> Vec<f64> {
    values.iter().map(|&u| if u == level { u + EXACT_HIT_SHIFT } else { u }).collect()
}

/// Marching triangles on the P1 interpolant.
pub fn extract_level_lines(solution: &SolutionField, level: f64) -> Vec<ContourPolyline> {
    extract_from_values(solution.mesh(), solution.nodal_values(), level)
}

pub fn extract_from_values(mesh: &Mesh, values: &[f64], level: f64) -> Vec<ContourPolyline> {
    let u = perturbed(values, level);
    let verts = mesh.vertices();
    // Crossing point per cut edge, keyed by sorted vertex pair.
    let mut crossing: BTreeMap<(usize, usize), Point> = BTreeMap::new();
    // Per cut edge, the (up to two) triangles joining it to another cut edge.
    let mut links: HashMap<(usize, usize), Vec<(usize, (usize, usize))>> = HashMap::new();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let mut cut = Vec::with_capacity(2);
        for i in 0..3 {
            let (a, b) = (tri[i], tri[(i + 1) % 3]);
            if (u[a] > level) != (u[b] > level) {
                let key = (a.min(b), a.max(b));
                crossing.entry(key).or_insert_with(|| {
                    let (p, q) = (key.0, key.1);
                    let s = (level - u[p]) / (u[q] - u[p]);
                    verts[p] + (verts[q] - verts[p]) * s
                });
                cut.push(key);
            }
        }
        if cut.len() == 2 {
            links.entry(cut[0]).or_default().push((t, cut[1]));
            links.entry(cut[1]).or_default().push((t, cut[0]));
        }
    }
    let mut used: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut out = Vec::new();
    let walk = |start: (usize, usize), used: &mut BTreeSet<(usize, usize)>| -> (Vec<(usize, usize)>, Vec<usize>, bool) {
        let mut keys = vec![start];
        let mut tris = Vec::new();
        used.insert(start);
        let mut prev_t = usize::MAX;
        let mut cur = start;
        loop {
            let next = links.get(&cur).and_then(|l| l.iter().find(|(t, _)| *t != prev_t).copied());
            let Some((t, nk)) = next else { return (keys, tris, false) };
            tris.push(t);
            if nk == start {
                return (keys, tris, true);
            }
            if !used.insert(nk) {
                return (keys, tris, false);
            }
            keys.push(nk);
            prev_t = t;
            cur = nk;
        }
    };
    // Open chains start at cut edges with a single link (mesh boundary).
    let starts: Vec<(usize, usize)> = crossing.keys().copied().filter(|k| links.get(k).map_or(0, |l| l.len()) == 1).collect();
    for s in starts {
        if used.contains(&s) {
            continue;
        }
        let (keys, tris, _) = walk(s, &mut used);
        if keys.len() < 2 {
            continue;
        }
        out.push(ContourPolyline {
            points: keys.iter().map(|k| crossing[k]).collect(),
            closed: false,
            level,
            orientation: Orientation::Open,
            segment_triangles: tris,
        });
    }
    let rest: Vec<(usize, usize)> = crossing.keys().copied().collect();
    for s in rest {
        if used.contains(&s) {
            continue;
        }
        let (keys, tris, closed) = walk(s, &mut used);
        let points: Vec<Point> = keys.iter().map(|k| crossing[k]).collect();
        if points.len() < 3 && closed {
            continue;
        }
        let mut line = ContourPolyline {
            points,
            closed,
            level,
            orientation: if closed { Orientation::Ccw } else { Orientation::Open },
            segment_triangles: tris,
        };
        if closed && line.signed_area() < 0.0 {
            line = line.reversed();
            line.orientation = Orientation::Ccw;
        }
        out.push(line);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperComponent {
    pub id: usize,
    /// 1-based numbers of the holes whose boundary the component touches.
    pub holes: Vec<usize>,
    pub triangles: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetDecomposition {
    pub level: f64,
    pub sublevel_components: usize,
    pub superlevel_components: Vec<SuperComponent>,
    pub k_plus: usize,
    /// Super-level component id per triangle, `None` where u stays at or below the level.
    #[serde(skip)]
    pub labels: Vec<Option<usize>>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller root wins so labels do not depend on visiting order.
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

/// Components of the strict super-level set `{u > level}` and sub-level set
/// `{u < level}` of the P1 interpolant. A triangle belongs to the super-level
/// set when one of its vertices is above the level; two such triangles are
/// joined across their shared edge when one of its endpoints is above it.
pub fn level_components(solution: &SolutionField, level: f64) -> LevelSetDecomposition {
    components_from_values(solution.mesh(), solution.nodal_values(), level)
}

fn label_components(mesh: &Mesh, inside: impl Fn(usize) -> bool) -> (Vec<Option<usize>>, Vec<usize>) {
    let tris = mesh.triangles();
    let nt = tris.len();
    let member: Vec<bool> = tris.iter().map(|t| t.iter().any(|&v| inside(v))).collect();
    let mut uf = UnionFind::new(nt);
    for (t, nb) in mesh.neighbors().iter().enumerate() {
        for (i, &s) in nb.iter().enumerate() {
            if s == NO_NEIGHBOR || s < t || !member[t] || !member[s] {
                continue;
            }
            if inside(tris[t][(i + 1) % 3]) || inside(tris[t][(i + 2) % 3]) {
                uf.union(t, s);
            }
        }
    }
    let mut ids: BTreeMap<usize, usize> = BTreeMap::new();
    let mut labels = vec![None; nt];
    let mut sizes = Vec::new();
    for t in 0..nt {
        if !member[t] {
            continue;
        }
        let next = ids.len();
        let id = *ids.entry(uf.find(t)).or_insert(next);
        if id == sizes.len() {
            sizes.push(0);
        }
        sizes[id] += 1;
        labels[t] = Some(id);
    }
    (labels, sizes)
}

pub fn components_from_values(mesh: &Mesh, values: &[f64], level: f64) -> LevelSetDecomposition {
    let (labels, sizes) = label_components(mesh, |v| values[v] > level);
    let (_, sub_sizes) = label_components(mesh, |v| values[v] < level);
    let mut holes: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); sizes.len()];
    for (e, &t) in mesh.boundary_edges().iter().zip(mesh.boundary_triangles()) {
        if let (BoundaryMarker::Hole(k), Some(id)) = (e.marker, labels[t]) {
            if e.v.iter().any(|&v| values[v] > level) {
                holes[id].insert(k);
            }
        }
    }
    let superlevel_components: Vec<SuperComponent> =
        (0..sizes.len()).map(|id| SuperComponent { id, holes: holes[id].iter().copied().collect(), triangles: sizes[id] }).collect();
    LevelSetDecomposition {
        level,
        sublevel_components: sub_sizes.len(),
        k_plus: superlevel_components.len(),
        superlevel_components,
        labels,
    }
}

/// Evenly spaced levels `k/(n+1)`, `k = 1..=n`.
pub fn uniform_levels(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 / (n + 1) as f64).collect()
}

/// Self-contained SVG with boundary, level lines and a gradient quiver.
pub fn render_svg(solution: &SolutionField, levels: &[f64]) -> String {
    let mesh = solution.mesh();
    let bb = mesh.bounding_box();
    let size = 800.0;
    let pad = 0.04 * bb.width().max(bb.height());
    let scale = size / (bb.width().max(bb.height()) + 2.0 * pad);
    let w = (bb.width() + 2.0 * pad) * scale;
    let hgt = (bb.height() + 2.0 * pad) * scale;
    let tx = |p: Point| ((p.x - bb.min.x + pad) * scale, (bb.max.y - p.y + pad) * scale);
    let mut s = String::new();
    let _ = writeln!(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.6}\" height=\"{hgt:.6}\" viewBox=\"0 0 {w:.6} {hgt:.6}\">");
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(s, "<g id=\"boundary\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\">");
    for (_, lp) in mesh.boundary_loops() {
        let pts: Vec<String> = lp
            .iter()
            .map(|&v| {
                let (x, y) = tx(mesh.vertices()[v]);
                format!("{x:.6},{y:.6}")
            })
            .collect();
        let _ = writeln!(s, "<polygon points=\"{}\"/>", pts.join(" "));
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "<g id=\"levels\" fill=\"none\" stroke=\"#1f5fbf\" stroke-width=\"0.8\">");
    for &level in levels {
        for line in extract_level_lines(solution, level) {
            let pts: Vec<String> = line
                .points
                .iter()
                .map(|&p| {
                    let (x, y) = tx(p);
                    format!("{x:.6},{y:.6}")
                })
                .collect();
            let tag = if line.closed { "polygon" } else { "polyline" };
            let _ = writeln!(s, "<{tag} data-level=\"{level:.6}\" points=\"{}\"/>", pts.join(" "));
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "<g id=\"quiver\" stroke=\"#c0392b\" stroke-width=\"0.8\">");
    let n = 25;
    let step = bb.width().max(bb.height()) / n as f64;
    let arrow = 0.8 * step * scale;
    for j in 0..=n {
        for i in 0..=n {
            let p = Point::new(bb.min.x + (i as f64 + 0.5) * step, bb.min.y + (j as f64 + 0.5) * step);
            let Ok(g) = solution.gradient_at(p) else { continue };
            let gn = g.norm();
            if gn == 0.0 {
                continue;
            }
            let (x0, y0) = tx(p);
            let (dx, dy) = (g.x / gn * arrow, -g.y / gn * arrow);
            let (x1, y1) = (x0 + dx, y0 + dy);
            let (hx, hy) = (0.3 * dx, 0.3 * dy);
            let _ = writeln!(
                s,
                "<path d=\"M{x0:.6},{y0:.6} L{x1:.6},{y1:.6} M{:.6},{:.6} L{x1:.6},{y1:.6} L{:.6},{:.6}\" fill=\"none\"/>",
                x1 - hx - 0.5 * hy,
                y1 - hy + 0.5 * hx,
                x1 - hx + 0.5 * hy,
                y1 - hy - 0.5 * hx
            );
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{BoundaryEdge, Mesh};
    use std::sync::Arc;

    fn square_field(values: Vec<f64>) -> SolutionField {
        let v = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)];
        let b = (0..4).map(|i| BoundaryEdge { v: [i, (i + 1) % 4], marker: BoundaryMarker::Exterior }).collect();
        let m = Mesh::new(v, vec![[0, 1, 2], [0, 2, 3]], b, vec![], 1.0).unwrap();
        SolutionField::from_nodal(Arc::new(m), values, vec![1.0, 1.0])
    }

    #[test]
    fn open_line_across_square() {
        let s = square_field(vec![0.0, 1.0, 1.0, 0.0]);
        let lines = extract_level_lines(&s, 0.5);
        assert_eq!(lines.len(), 1);
        assert!(!lines[0].closed);
        for p in &lines[0].points {
            assert!((p.x - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_hits_are_perturbed() {
        let s = square_field(vec![0.0, 0.5, 1.0, 0.5]);
        let lines = extract_level_lines(&s, 0.5);
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].points.len(), 3);
    }

    #[test]
    fn components_of_two_triangles() {
        let s = square_field(vec![1.0, 0.0, 1.0, 0.0]);
        let d = level_components(&s, 0.5);
        // The diagonal at u = 1 separates the two low corners.
        assert_eq!(d.k_plus, 1);
        assert_eq!(d.sublevel_components, 2);
        let d = level_components(&s, 1.0);
        assert_eq!(d.k_plus, 0);
        assert_eq!(d.sublevel_components, 2);
        let d = level_components(&s, -0.5);
        assert_eq!(d.k_plus, 1);
        assert_eq!(d.sublevel_components, 0);
    }
}
