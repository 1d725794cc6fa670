//! Incremental Bowyer–Watson Delaunay triangulation.
//!
//! Points are inserted in Hilbert order into a triangulation seeded by a large
//! enclosing triangle. Each insertion locates the containing triangle by a
//! visibility walk, grows the cavity of triangles whose circumcircle contains
//! the new point, trims the cavity until it is star-shaped with respect to that
//! point and re-triangulates it as a fan. Predicates are exact (adaptive
//! precision), so cocircular boundary samples do not corrupt the structure.

use thiserror::Error;

use crate::geometry::{BoundingBox, Point};

const NONE: u32 = u32::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum DelaunayError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("points {0} and {1} coincide")]
    Duplicate(usize, usize),
    #[error("point location failed for point {0}")]
    LocateFailed(usize),
}

#[derive(Clone, Copy, Debug)]
struct Tri {
    v: [u32; 3],
    /// `n[i]` is the neighbour across the edge opposite `v[i]`.
    n: [u32; 3],
    alive: bool,
}

#[inline]
fn coord(p: Point) -> robust::Coord<f64> {
    robust::Coord { x: p.x, y: p.y }
}

#[inline]
fn orient(a: Point, b: Point, c: Point) -> f64 {
    robust::orient2d(coord(a), coord(b), coord(c))
}

#[inline]
fn in_circle(a: Point, b: Point, c: Point, d: Point) -> f64 {
    robust::incircle(coord(a), coord(b), coord(c), coord(d))
}

struct Triangulation {
    pts: Vec<Point>,
    tris: Vec<Tri>,
    mark: Vec<u32>,
    stamp: u32,
    last: u32,
}

impl Triangulation {
    fn p(&self, v: u32) -> Point {
        self.pts[v as usize]
    }

    fn contains_in_circle(&self, t: u32, q: Point) -> bool {
        let tr = &self.tris[t as usize];
        in_circle(self.p(tr.v[0]), self.p(tr.v[1]), self.p(tr.v[2]), q) > 0.0
    }

    fn locate(&self, q: Point) -> Option<u32> {
        let mut t = self.last;
        if !self.tris[t as usize].alive {
            t = self.tris.iter().rposition(|t| t.alive)? as u32;
        }
        let max_steps = 4 * self.tris.len() + 16;
        let mut rot = 0usize;
        'walk: for _ in 0..max_steps {
            let tr = self.tris[t as usize];
            rot = rot.wrapping_add(1);
            for k in 0..3 {
                let i = (k + rot) % 3;
                let a = self.p(tr.v[(i + 1) % 3]);
                let b = self.p(tr.v[(i + 2) % 3]);
                if orient(a, b, q) < 0.0 {
                    if tr.n[i] == NONE {
                        return None;
                    }
                    t = tr.n[i];
                    continue 'walk;
                }
            }
            return Some(t);
        }
        // Walk did not terminate; fall back to a scan.
        self.tris.iter().enumerate().find_map(|(i, tr)| {
            if !tr.alive {
                return None;
            }
            let [a, b, c] = tr.v.map(|v| self.p(v));
            (orient(a, b, q) >= 0.0 && orient(b, c, q) >= 0.0 && orient(c, a, q) >= 0.0).then_some(i as u32)
        })
    }

    fn insert(&mut self, vi: u32) -> Result<(), DelaunayError> {
        let q = self.p(vi);
        let t0 = self.locate(q).ok_or(DelaunayError::LocateFailed(vi as usize))?;
        for &v in &self.tris[t0 as usize].v {
            if self.p(v) == q {
                return Err(DelaunayError::Duplicate(v as usize, vi as usize));
            }
        }

        // Grow the cavity.
        self.stamp += 1;
        if self.mark.len() < self.tris.len() {
            self.mark.resize(self.tris.len(), 0);
        }
        let stamp = self.stamp;
        let mut cavity = vec![t0];
        self.mark[t0 as usize] = stamp;
        let mut head = 0;
        while head < cavity.len() {
            let t = cavity[head];
            head += 1;
            for nb in self.tris[t as usize].n {
                if nb == NONE || self.mark[nb as usize] == stamp {
                    continue;
                }
                if self.contains_in_circle(nb, q) {
                    self.mark[nb as usize] = stamp;
                    cavity.push(nb);
                }
            }
        }

        // Trim until every boundary edge sees the new point on its left.
        loop {
            let cur = self.stamp;
            let mut bad = None;
            'scan: for &t in &cavity {
                let tr = self.tris[t as usize];
                for i in 0..3 {
                    let nb = tr.n[i];
                    if nb != NONE && self.mark[nb as usize] == cur {
                        continue;
                    }
                    let a = self.p(tr.v[(i + 1) % 3]);
                    let b = self.p(tr.v[(i + 2) % 3]);
                    if orient(a, b, q) <= 0.0 && t != t0 {
                        bad = Some(t);
                        break 'scan;
                    }
                }
            }
            let Some(bad) = bad else { break };
            self.mark[bad as usize] = 0;
            cavity.retain(|&t| t != bad);
            // Keep only what is still connected to t0.
            self.stamp += 1;
            let keep = self.stamp;
            let mut reach = vec![t0];
            self.mark[t0 as usize] = keep;
            let mut h = 0;
            while h < reach.len() {
                let t = reach[h];
                h += 1;
                for nb in self.tris[t as usize].n {
                    if nb != NONE && self.mark[nb as usize] == keep - 1 {
                        self.mark[nb as usize] = keep;
                        reach.push(nb);
                    }
                }
            }
            for &t in &cavity {
                if self.mark[t as usize] == keep - 1 {
                    self.mark[t as usize] = 0;
                }
            }
            cavity = reach;
        }
        let stamp = self.stamp;

        // Boundary edges (a, b, outside neighbour) in cavity order.
        let mut rim: Vec<(u32, u32, u32)> = Vec::with_capacity(cavity.len() + 2);
        for &t in &cavity {
            let tr = self.tris[t as usize];
            for i in 0..3 {
                let nb = tr.n[i];
                if nb != NONE && self.mark[nb as usize] == stamp {
                    continue;
                }
                rim.push((tr.v[(i + 1) % 3], tr.v[(i + 2) % 3], nb));
            }
        }
        for &t in &cavity {
            self.tris[t as usize].alive = false;
        }

        let base = self.tris.len() as u32;
        for &(a, b, _) in &rim {
            self.tris.push(Tri { v: [a, b, vi], n: [NONE; 3], alive: true });
        }
        for (k, &(a, b, outer)) in rim.iter().enumerate() {
            let t = base + k as u32;
            // Neighbour across (b, p) starts at b; across (p, a) ends at a.
            let next = rim.iter().position(|&(s, _, _)| s == b).map(|j| base + j as u32);
            let prev = rim.iter().position(|&(_, e, _)| e == a).map(|j| base + j as u32);
            let tr = &mut self.tris[t as usize];
            tr.n[0] = next.unwrap_or(NONE);
            tr.n[1] = prev.unwrap_or(NONE);
            tr.n[2] = outer;
            if outer != NONE {
                let o = &mut self.tris[outer as usize];
                for i in 0..3 {
                    let (x, y) = (o.v[(i + 1) % 3], o.v[(i + 2) % 3]);
                    if x == b && y == a {
                        o.n[i] = t;
                    }
                }
            }
        }
        self.last = base;
        Ok(())
    }
}

fn hilbert_index(order: u32, mut x: u32, mut y: u32) -> u64 {
    let n = 1u32 << order;
    let mut d: u64 = 0;
    let mut s = n / 2;
    while s > 0 {
        let rx = u32::from(x & s > 0);
        let ry = u32::from(y & s > 0);
        d += u64::from(s) * u64::from(s) * u64::from((3 * rx) ^ ry);
        if ry == 0 {
            if rx == 1 {
                x = s.wrapping_sub(1).wrapping_sub(x) & (n - 1);
                y = s.wrapping_sub(1).wrapping_sub(y) & (n - 1);
            }
            std::mem::swap(&mut x, &mut y);
        }
        s /= 2;
    }
    d
}

/// Delaunay triangulation of `points`. Returned triangles are counterclockwise
/// index triples into `points`; the convex hull is covered.
pub fn triangulate(points: &[Point]) -> Result<Vec<[usize; 3]>, DelaunayError> {
    if points.len() < 3 {
        return Err(DelaunayError::TooFewPoints(points.len()));
    }
    if let Some(i) = points.iter().position(|p| !p.is_finite()) {
        return Err(DelaunayError::NonFinite(i));
    }
    let bb = BoundingBox::of(points.iter().copied()).expect("non-empty");
    let c = bb.center();
    let m = bb.width().max(bb.height()).max(1e-300);

    let n = points.len();
    let mut pts = points.to_vec();
    pts.push(Point::new(c.x - 40.0 * m, c.y - 30.0 * m));
    pts.push(Point::new(c.x + 40.0 * m, c.y - 30.0 * m));
    pts.push(Point::new(c.x, c.y + 40.0 * m));
    let s = n as u32;

    let mut tri =
        Triangulation { pts, tris: vec![Tri { v: [s, s + 1, s + 2], n: [NONE; 3], alive: true }], mark: Vec::new(), stamp: 0, last: 0 };

    const ORDER: u32 = 16;
    let scale = f64::from((1u32 << ORDER) - 1);
    let mut order: Vec<(u64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let gx = ((p.x - bb.min.x) / m * scale).clamp(0.0, scale) as u32;
            let gy = ((p.y - bb.min.y) / m * scale).clamp(0.0, scale) as u32;
            (hilbert_index(ORDER, gx, gy), i)
        })
        .collect();
    order.sort_unstable();

    for &(_, i) in &order {
        tri.insert(i as u32)?;
    }

    Ok(tri.tris.iter().filter(|t| t.alive && t.v.iter().all(|&v| v < s)).map(|t| t.v.map(|v| v as usize)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{incircle, orient2d};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn check_delaunay(pts: &[Point], tris: &[[usize; 3]]) {
        for t in tris {
            let [a, b, c] = t.map(|i| pts[i]);
            assert!(orient2d(a, b, c) > 0.0);
            for (j, &p) in pts.iter().enumerate() {
                if t.contains(&j) {
                    continue;
                }
                let s = incircle(a, b, c, p);
                let scale = (a - p).norm_sq().max((b - p).norm_sq()).max((c - p).norm_sq());
                assert!(s <= 1e-9 * scale * scale, "point {j} inside circumcircle of {t:?}");
            }
        }
    }

    #[test]
    fn random_points_are_delaunay_and_cover_hull_area() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut pts: Vec<Point> = (0..300).map(|_| Point::new(rng.gen(), rng.gen())).collect();
        pts.extend([Point::new(-0.1, -0.1), Point::new(1.1, -0.1), Point::new(1.1, 1.1), Point::new(-0.1, 1.1)]);
        let tris = triangulate(&pts).unwrap();
        check_delaunay(&pts, &tris);
        let area: f64 = tris.iter().map(|t| 0.5 * orient2d(pts[t[0]], pts[t[1]], pts[t[2]])).sum();
        assert!((area - 1.44).abs() < 1e-12, "area {area}");
        // Euler: T = 2V - 2 - hull vertices (4 here).
        assert_eq!(tris.len(), 2 * pts.len() - 2 - 4);
    }

    #[test]
    fn cocircular_points_give_a_valid_triangulation() {
        let n = 40;
        let mut pts: Vec<Point> = (0..n).map(|k| Point::polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64)).collect();
        pts.push(Point::new(0.01, -0.02));
        let tris = triangulate(&pts).unwrap();
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &tris {
            assert!(orient2d(pts[t[0]], pts[t[1]], pts[t[2]]) > 0.0);
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        assert!(edges.values().all(|&c| c <= 2));
        for k in 0..n {
            let (a, b) = (k, (k + 1) % n);
            assert_eq!(edges.get(&(a.min(b), a.max(b))), Some(&1), "hull edge {a}-{b}");
        }
    }

    #[test]
    fn duplicate_points_are_rejected() {
        let pts = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0), Point::new(1.0, 0.0)];
        assert!(matches!(triangulate(&pts), Err(DelaunayError::Duplicate(_, _))));
    }

    #[test]
    fn hilbert_index_is_a_bijection_on_small_grid() {
        let mut seen = std::collections::HashSet::new();
        for x in 0..8 {
            for y in 0..8 {
                assert!(seen.insert(hilbert_index(3, x, y)));
            }
        }
        assert_eq!(seen.len(), 64);
    }
}
