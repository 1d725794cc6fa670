//! Plain-text mesh files: the native `critflow-mesh 1` format and a Gmsh 2.2
//! ASCII reader.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{BoundaryEdge, BoundaryMarker, Mesh, MeshError};
use crate::geometry::{orient2d, Point};

const HEADER: &str = "critflow-mesh 1";

pub fn mesh_to_string(mesh: &Mesh) -> String {
    let mut s = String::with_capacity(64 * mesh.vertices().len());
    let _ = writeln!(s, "{HEADER}");
    let _ = writeln!(s, "vertices {}", mesh.vertices().len());
    for p in mesh.vertices() {
        let _ = writeln!(s, "{:.16e} {:.16e}", p.x, p.y);
    }
    let _ = writeln!(s, "triangles {}", mesh.triangles().len());
    for t in mesh.triangles() {
        let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "boundary {}", mesh.boundary_edges().len());
    for e in mesh.boundary_edges() {
        let _ = writeln!(s, "{} {} {}", e.v[0], e.v[1], e.marker);
    }
    let _ = writeln!(s, "corners {}", mesh.corner_vertex_ids().len());
    for c in mesh.corner_vertex_ids() {
        let _ = writeln!(s, "{c}");
    }
    s
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    std::fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    parse_mesh(&std::fs::read_to_string(path)?)
}

fn parse_err(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse { line, message: message.into() }
}

/// Non-empty, non-comment lines with their 1-based line numbers.
struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines { inner: text.lines().enumerate(), last: 0 }
    }

    fn next_line(&mut self) -> Result<(usize, &'a str), MeshError> {
        for (i, l) in self.inner.by_ref() {
            let t = l.trim();
            if !t.is_empty() && !t.starts_with('#') {
                self.last = i + 1;
                return Ok((i + 1, t));
            }
        }
        Err(parse_err(self.last + 1, "unexpected end of file"))
    }

    fn section(&mut self, name: &str) -> Result<usize, MeshError> {
        let (ln, l) = self.next_line()?;
        let mut it = l.split_whitespace();
        if it.next() != Some(name) {
            return Err(parse_err(ln, format!("expected `{name} <count>`")));
        }
        let n = it.next().ok_or_else(|| parse_err(ln, "missing count"))?;
        if it.next().is_some() {
            return Err(parse_err(ln, "trailing tokens"));
        }
        n.parse().map_err(|_| parse_err(ln, format!("invalid count `{n}`")))
    }
}

fn fields<const N: usize>(ln: usize, l: &str) -> Result<[&str; N], MeshError> {
    let v: Vec<&str> = l.split_whitespace().collect();
    v.try_into().map_err(|v: Vec<&str>| parse_err(ln, format!("expected {N} fields, found {}", v.len())))
}

fn num<T: std::str::FromStr>(ln: usize, s: &str) -> Result<T, MeshError> {
    s.parse().map_err(|_| parse_err(ln, format!("invalid number `{s}`")))
}

fn parse_marker(ln: usize, s: &str) -> Result<BoundaryMarker, MeshError> {
    if s == "ext" {
        return Ok(BoundaryMarker::Exterior);
    }
    if let Some(k) = s.strip_prefix("hole:") {
        let k: usize = num(ln, k)?;
        if k == 0 {
            return Err(parse_err(ln, "hole markers start at 1"));
        }
        return Ok(BoundaryMarker::Hole(k));
    }
    Err(parse_err(ln, format!("unknown boundary marker `{s}`")))
}

/// Reverses clockwise triangles, returning a warning per fix.
fn reorient(vertices: &[Point], triangles: &mut [[usize; 3]]) -> Vec<String> {
    let mut warnings = Vec::new();
    for (t, tri) in triangles.iter_mut().enumerate() {
        if tri.iter().all(|&v| v < vertices.len()) && orient2d(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]) < 0.0 {
            tri.swap(1, 2);
            warnings.push(format!("triangle {t} was clockwise and has been reoriented"));
        }
    }
    warnings
}

fn max_edge(vertices: &[Point], triangles: &[[usize; 3]]) -> f64 {
    let mut h: f64 = 0.0;
    for t in triangles {
        for i in 0..3 {
            let (a, b) = (t[i], t[(i + 1) % 3]);
            if a < vertices.len() && b < vertices.len() {
                h = h.max(vertices[a].dist(vertices[b]));
            }
        }
    }
    h
}

pub fn parse_mesh(text: &str) -> Result<Mesh, MeshError> {
    let mut lines = Lines::new(text);
    let (ln, head) = lines.next_line()?;
    if head.split_whitespace().collect::<Vec<_>>() != HEADER.split(' ').collect::<Vec<_>>() {
        return Err(parse_err(ln, format!("expected header `{HEADER}`")));
    }
    let nv = lines.section("vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next_line()?;
        let [x, y] = fields::<2>(ln, l)?;
        vertices.push(Point::new(num(ln, x)?, num(ln, y)?));
    }
    let nt = lines.section("triangles")?;
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, l) = lines.next_line()?;
        let [a, b, c] = fields::<3>(ln, l)?;
        triangles.push([num(ln, a)?, num(ln, b)?, num(ln, c)?]);
    }
    let ne = lines.section("boundary")?;
    let mut boundary = Vec::with_capacity(ne);
    for _ in 0..ne {
        let (ln, l) = lines.next_line()?;
        let [a, b, m] = fields::<3>(ln, l)?;
        boundary.push(BoundaryEdge { v: [num(ln, a)?, num(ln, b)?], marker: parse_marker(ln, m)? });
    }
    let nc = lines.section("corners")?;
    let mut corners = Vec::with_capacity(nc);
    while corners.len() < nc {
        let (ln, l) = lines.next_line()?;
        for tok in l.split_whitespace() {
            corners.push(num(ln, tok)?);
        }
    }
    if corners.len() != nc {
        return Err(parse_err(lines.last, format!("expected {nc} corner indices, found {}", corners.len())));
    }
    if let Ok((ln, _)) = lines.next_line() {
        return Err(parse_err(ln, "unexpected content after the corners section"));
    }
    let warnings = reorient(&vertices, &mut triangles);
    let h = max_edge(&vertices, &triangles);
    Ok(Mesh::new(vertices, triangles, boundary, corners, h)?.with_warnings(warnings))
}

/// Reads the Gmsh 2.2 ASCII subset: nodes, 2-node lines and 3-node
/// triangles. Boundary lines use physical names `ext` / `hole:<k>` when
/// present, otherwise physical tag 1 is the exterior and tag `k+1` hole `k`.
/// Point elements with physical name `corner` mark corner vertices.
pub fn load_gmsh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    parse_gmsh(&std::fs::read_to_string(path)?)
}

pub fn parse_gmsh(text: &str) -> Result<Mesh, MeshError> {
    let mut lines = Lines::new(text);
    let mut names: HashMap<i64, String> = HashMap::new();
    let mut node_index: HashMap<i64, usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut lines_el: Vec<(usize, i64, [i64; 2])> = Vec::new();
    let mut points_el: Vec<(usize, i64, i64)> = Vec::new();
    let mut triangles_raw: Vec<(usize, [i64; 3])> = Vec::new();
    let mut seen_format = false;
    while let Ok((ln, l)) = lines.next_line() {
        match l {
            "$MeshFormat" => {
                let (ln, f) = lines.next_line()?;
                let [ver, ft, _] = fields::<3>(ln, f)?;
                if !ver.starts_with("2.") || ft != "0" {
                    return Err(parse_err(ln, "only Gmsh 2.x ASCII files are supported"));
                }
                expect_end(&mut lines, "$EndMeshFormat")?;
                seen_format = true;
            }
            "$PhysicalNames" => {
                let (ln, n) = lines.next_line()?;
                let n: usize = num(ln, n)?;
                for _ in 0..n {
                    let (ln, l) = lines.next_line()?;
                    let mut it = l.splitn(3, char::is_whitespace);
                    let _dim = it.next();
                    let tag: i64 = num(ln, it.next().unwrap_or(""))?;
                    let name = it.next().unwrap_or("").trim().trim_matches('"').to_string();
                    names.insert(tag, name);
                }
                expect_end(&mut lines, "$EndPhysicalNames")?;
            }
            "$Nodes" => {
                let (ln, n) = lines.next_line()?;
                let n: usize = num(ln, n)?;
                for _ in 0..n {
                    let (ln, l) = lines.next_line()?;
                    let [id, x, y, _z] = fields::<4>(ln, l)?;
                    let id: i64 = num(ln, id)?;
                    if node_index.insert(id, vertices.len()).is_some() {
                        return Err(parse_err(ln, format!("duplicate node id {id}")));
                    }
                    vertices.push(Point::new(num(ln, x)?, num(ln, y)?));
                }
                expect_end(&mut lines, "$EndNodes")?;
            }
            "$Elements" => {
                let (ln, n) = lines.next_line()?;
                let n: usize = num(ln, n)?;
                for _ in 0..n {
                    let (ln, l) = lines.next_line()?;
                    let toks: Vec<i64> = l.split_whitespace().map(|t| num(ln, t)).collect::<Result<_, _>>()?;
                    if toks.len() < 3 {
                        return Err(parse_err(ln, "element line too short"));
                    }
                    let ntags = usize::try_from(toks[2]).map_err(|_| parse_err(ln, "negative tag count"))?;
                    let nodes = toks.get(3 + ntags..).ok_or_else(|| parse_err(ln, "missing element nodes"))?;
                    let phys = if ntags > 0 { toks[3] } else { 0 };
                    match (toks[1], nodes.len()) {
                        (1, 2) => lines_el.push((ln, phys, [nodes[0], nodes[1]])),
                        (2, 3) => triangles_raw.push((ln, [nodes[0], nodes[1], nodes[2]])),
                        (15, 1) => points_el.push((ln, phys, nodes[0])),
                        (1 | 2 | 15, _) => return Err(parse_err(ln, "wrong node count for element type")),
                        _ => {}
                    }
                }
                expect_end(&mut lines, "$EndElements")?;
            }
            other if other.starts_with('$') => {
                let end = format!("$End{}", &other[1..]);
                loop {
                    let (_, l) = lines.next_line()?;
                    if l == end {
                        break;
                    }
                }
            }
            _ => return Err(parse_err(ln, format!("unexpected line `{l}`"))),
        }
    }
    if !seen_format {
        return Err(parse_err(1, "missing $MeshFormat section"));
    }
    let node = |ln: usize, id: i64| -> Result<usize, MeshError> {
        node_index.get(&id).copied().ok_or_else(|| MeshError::Validation(format!("line {ln}: unknown node id {id}")))
    };
    let mut triangles = Vec::with_capacity(triangles_raw.len());
    for (ln, t) in &triangles_raw {
        triangles.push([node(*ln, t[0])?, node(*ln, t[1])?, node(*ln, t[2])?]);
    }
    let mut boundary = Vec::with_capacity(lines_el.len());
    for (ln, phys, e) in &lines_el {
        let marker = match names.get(phys) {
            Some(name) => parse_marker(*ln, name)?,
            None if *phys == 1 => BoundaryMarker::Exterior,
            None if *phys > 1 => BoundaryMarker::Hole((*phys - 1) as usize),
            None => return Err(parse_err(*ln, format!("line element has no usable physical tag ({phys})"))),
        };
        boundary.push(BoundaryEdge { v: [node(*ln, e[0])?, node(*ln, e[1])?], marker });
    }
    let mut corners = Vec::new();
    for (ln, phys, n) in &points_el {
        if names.get(phys).map(String::as_str) == Some("corner") {
            corners.push(node(*ln, *n)?);
        }
    }
    let warnings = reorient(&vertices, &mut triangles);
    let h = max_edge(&vertices, &triangles);
    Ok(Mesh::new(vertices, triangles, boundary, corners, h)?.with_warnings(warnings))
}

fn expect_end(lines: &mut Lines<'_>, end: &str) -> Result<(), MeshError> {
    let (ln, l) = lines.next_line()?;
    if l != end {
        return Err(parse_err(ln, format!("expected `{end}`")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clockwise_triangle_is_reoriented() {
        let text = "critflow-mesh 1\nvertices 3\n0 0\n0 1\n1 0\ntriangles 1\n0 1 2\nboundary 3\n0 1 ext\n1 2 ext\n2 0 ext\ncorners 0\n";
        let m = parse_mesh(text).unwrap();
        assert_eq!(m.warnings().len(), 1);
        assert!(m.triangle_area(0) > 0.0);
    }

    #[test]
    fn out_of_range_index_is_a_validation_error() {
        let text = "critflow-mesh 1\nvertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 7\nboundary 0\ncorners 0\n";
        assert!(matches!(parse_mesh(text), Err(MeshError::Validation(_))));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "critflow-mesh 1\nvertices 2\n0 0\n1 zz\n";
        match parse_mesh(text) {
            Err(MeshError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_mesh("nope\n"), Err(MeshError::Parse { line: 1, .. })));
    }

    #[test]
    fn gmsh_square() {
        let text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 1 1 0\n4 0 1 0\n$EndNodes\n\
$Elements\n6\n1 1 2 1 1 1 2\n2 1 2 1 1 2 3\n3 1 2 1 1 3 4\n4 1 2 1 1 4 1\n5 2 2 0 1 1 2 3\n6 2 2 0 1 1 3 4\n$EndElements\n";
        let m = parse_gmsh(text).unwrap();
        assert_eq!(m.triangles().len(), 2);
        assert_eq!(m.hole_count(), 0);
        assert!((m.total_area() - 1.0).abs() < 1e-15);
    }
}
