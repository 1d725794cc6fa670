//! P1 Galerkin discretization of div(ρ∇u) = 0 with Dirichlet data, and a
//! Jacobi-preconditioned conjugate-gradient solver.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coefficient::{CoefficientError, CoefficientField};
use crate::geometry::{orient2d, Point, Vec2};
use crate::mesh::{BoundaryMarker, Mesh};

/// Tolerance of the discrete maximum-principle check.
pub const MAX_PRINCIPLE_TOL: f64 = 1e-9;
pub const DEFAULT_TOL: f64 = 1e-10;
const MIN_AREA: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("triangle {triangle} is degenerate (area {area:e})")]
    DegenerateElement { triangle: usize, area: f64 },
    #[error("coefficient is negative ({value}) on triangle {triangle}")]
    NonpositiveCoefficient { triangle: usize, value: f64 },
    #[error(transparent)]
    Coefficient(#[from] CoefficientError),
    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("point ({x}, {y}) is outside the mesh")]
    OutsideDomain { x: f64, y: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where ρ is sampled on each element.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// One point at the barycentre.
    #[default]
    Barycenter,
    /// Mean of the three edge midpoints.
    EdgeMidpoints,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssemblyOptions {
    pub quadrature: Quadrature,
    /// Worker threads for element matrices; the reduction is always sequential.
    pub threads: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions { quadrature: Quadrature::Barycenter, threads: 1 }
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from triplets; duplicates are summed in input order.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> CsrMatrix {
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len() / 2);
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len() / 2);
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.values[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Largest |a_ij − a_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                worst = worst.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }
}

/// Stiffness on the free vertices plus the lifted Dirichlet data.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub mesh: Arc<Mesh>,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Vertex id of each unknown.
    pub free: Vec<usize>,
    /// Prescribed value per vertex, `None` for unknowns.
    pub dirichlet: Vec<Option<f64>>,
    pub element_rho: Vec<f64>,
}

impl SparseSystem {
    pub fn dof(&self) -> usize {
        self.free.len()
    }

    pub fn min_element_rho(&self) -> f64 {
        self.element_rho.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `‖rhs − A x‖ / ‖rhs‖` (absolute norm when the rhs vanishes).
    pub fn relative_residual(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.dof()];
        self.matrix.mul_vec(x, &mut ax);
        let r: f64 = ax.iter().zip(&self.rhs).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
        let b = norm(&self.rhs);
        if b > 0.0 {
            r / b
        } else {
            r
        }
    }

    /// Gathers the unknowns from a full nodal vector.
    pub fn restrict(&self, nodal: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&v| nodal[v]).collect()
    }
}

/// Gradients of the three P1 shape functions and the triangle area.
pub fn shape_gradients(p: [Point; 3]) -> ([Vec2; 3], f64) {
    let twice = orient2d(p[0], p[1], p[2]);
    let mut g = [Point::ORIGIN; 3];
    for i in 0..3 {
        let (pj, pk) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        g[i] = Point::new(pj.y - pk.y, pk.x - pj.x) * (1.0 / twice);
    }
    (g, 0.5 * twice)
}

/// Local stiffness `ρ·area·∇φ_i·∇φ_j`.
pub fn element_stiffness(p: [Point; 3], rho: f64) -> [[f64; 3]; 3] {
    let (g, area) = shape_gradients(p);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = rho * area * g[i].dot(g[j]);
        }
    }
    k
}

/// Samples ρ once per element.
pub fn element_coefficients(mesh: &Mesh, rho: &CoefficientField, quadrature: Quadrature) -> Result<Vec<f64>, FemError> {
    let mut out = Vec::with_capacity(mesh.triangles().len());
    for t in 0..mesh.triangles().len() {
        let area = mesh.triangle_area(t);
        if area < MIN_AREA {
            return Err(FemError::DegenerateElement { triangle: t, area });
        }
        let [a, b, c] = mesh.triangle_points(t);
        let v = match quadrature {
            Quadrature::Barycenter => rho.eval(crate::geometry::centroid(a, b, c))?,
            Quadrature::EdgeMidpoints => (rho.eval(a.midpoint(b))? + rho.eval(b.midpoint(c))? + rho.eval(c.midpoint(a))?) / 3.0,
        };
        if v < 0.0 || v.is_nan() {
            return Err(FemError::NonpositiveCoefficient { triangle: t, value: v });
        }
        out.push(v);
    }
    Ok(out)
}

/// Dirichlet data from boundary markers: 0 on the exterior, `hole_value` on
/// every hole.
pub fn marker_dirichlet(mesh: &Mesh, hole_value: f64) -> Vec<Option<f64>> {
    mesh.vertex_markers()
        .into_iter()
        .map(|m| {
            m.map(|m| match m {
                BoundaryMarker::Exterior => 0.0,
                BoundaryMarker::Hole(_) => hole_value,
            })
        })
        .collect()
}

pub fn assemble(mesh: &Arc<Mesh>, rho: &CoefficientField) -> Result<SparseSystem, FemError> {
    assemble_with(mesh, rho, &AssemblyOptions::default())
}

pub fn assemble_with(mesh: &Arc<Mesh>, rho: &CoefficientField, opts: &AssemblyOptions) -> Result<SparseSystem, FemError> {
    let element_rho = element_coefficients(mesh, rho, opts.quadrature)?;
    Ok(assemble_general(mesh, element_rho, marker_dirichlet(mesh, 1.0), opts.threads))
}

fn local_matrices(mesh: &Mesh, element_rho: &[f64], threads: usize) -> Vec<[[f64; 3]; 3]> {
    let work = |t: usize| element_stiffness(mesh.triangle_points(t), element_rho[t]);
    let n = mesh.triangles().len();
    if threads <= 1 {
        return (0..n).map(work).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(work).collect()),
        Err(_) => (0..n).map(work).collect(),
    }
}

/// Assembles with explicit per-element coefficients and per-vertex Dirichlet
/// values.
pub fn assemble_general(mesh: &Arc<Mesh>, element_rho: Vec<f64>, dirichlet: Vec<Option<f64>>, threads: usize) -> SparseSystem {
    let nv = mesh.vertices().len();
    assert_eq!(dirichlet.len(), nv, "one Dirichlet entry per vertex");
    assert_eq!(element_rho.len(), mesh.triangles().len(), "one coefficient per triangle");
    let mut dof_of = vec![usize::MAX; nv];
    let mut free = Vec::new();
    for v in 0..nv {
        if dirichlet[v].is_none() {
            dof_of[v] = free.len();
            free.push(v);
        }
    }
    let locals = local_matrices(mesh, &element_rho, threads);
    let mut triplets = Vec::with_capacity(9 * locals.len());
    let mut rhs = vec![0.0; free.len()];
    for (tri, k) in mesh.triangles().iter().zip(&locals) {
        for i in 0..3 {
            let di = dof_of[tri[i]];
            if di == usize::MAX {
                continue;
            }
            for j in 0..3 {
                match dirichlet[tri[j]] {
                    None => triplets.push((di, dof_of[tri[j]], k[i][j])),
                    Some(g) => rhs[di] -= k[i][j] * g,
                }
            }
        }
    }
    let matrix = CsrMatrix::from_triplets(free.len(), triplets);
    SparseSystem { mesh: Arc::clone(mesh), matrix, rhs, free, dirichlet, element_rho }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn default_max_iter(dof: usize) -> usize {
    ((20.0 * (dof as f64).sqrt()).ceil() as usize).max(20)
}

/// Jacobi-preconditioned CG from a zero initial guess. Returns the solution,
/// the iteration count and the relative residual.
pub fn pcg(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize, f64), FemError> {
    let n = a.n;
    let mut x = vec![0.0; n];
    let bn = norm(b);
    if n == 0 || bn == 0.0 {
        return Ok((x, 0, 0.0));
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 1..=max_iter {
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(FemError::NoConvergence { iterations: it, residual: rel });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm(&r) / bn;
        if rel <= tol {
            // Confirm with the true residual.
            a.mul_vec(&x, &mut ap);
            let true_rel = ap.iter().zip(b).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt() / bn;
            if true_rel <= tol {
                return Ok((x, it, true_rel));
            }
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(FemError::NoConvergence { iterations: max_iter, residual: rel })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub min_element_rho: f64,
}

/// Solves the system; `max_iter = None` uses `20·√dof`.
pub fn solve(system: &SparseSystem, tol: f64, max_iter: Option<usize>) -> Result<SolutionField, FemError> {
    if !(tol > 0.0) {
        return Err(FemError::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    let max_iter = max_iter.unwrap_or_else(|| default_max_iter(system.dof()));
    let (x, iterations, residual) = pcg(&system.matrix, &system.rhs, tol, max_iter)?;
    let mut nodal: Vec<f64> = system.dirichlet.iter().map(|d| d.unwrap_or(0.0)).collect();
    for (k, &v) in system.free.iter().enumerate() {
        nodal[v] = x[k];
    }
    let stats = SolveStats { iterations, residual, min_element_rho: system.min_element_rho() };
    let mut sol = SolutionField::from_nodal(Arc::clone(&system.mesh), nodal, system.element_rho.clone());
    sol.stats = stats;
    let (lo, hi) = system.dirichlet.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &g| (a.min(g), b.max(g)));
    if lo.is_finite() {
        let (umin, umax) = sol.range();
        if umin < lo - MAX_PRINCIPLE_TOL || umax > hi + MAX_PRINCIPLE_TOL {
            sol.warnings
                .push(format!("discrete maximum principle violated: values in [{umin:e}, {umax:e}], boundary data in [{lo}, {hi}]"));
        }
    }
    Ok(sol)
}

/// Nodal P1 field with per-element gradients.
#[derive(Clone, Debug)]
pub struct SolutionField {
    mesh: Arc<Mesh>,
    nodal_values: Vec<f64>,
    element_gradients: Vec<Vec2>,
    element_rho: Vec<f64>,
    pub stats: SolveStats,
    pub warnings: Vec<String>,
}

impl SolutionField {
    /// Wraps nodal values; gradients follow from the P1 shape functions.
    pub fn from_nodal(mesh: Arc<Mesh>, nodal_values: Vec<f64>, element_rho: Vec<f64>) -> SolutionField {
        assert_eq!(nodal_values.len(), mesh.vertices().len(), "one value per vertex");
        let element_gradients = (0..mesh.triangles().len())
            .map(|t| {
                let (g, _) = shape_gradients(mesh.triangle_points(t));
                let tri = mesh.triangles()[t];
                g[0] * nodal_values[tri[0]] + g[1] * nodal_values[tri[1]] + g[2] * nodal_values[tri[2]]
            })
            .collect();
        let min_element_rho = element_rho.iter().copied().fold(f64::INFINITY, f64::min);
        SolutionField {
            mesh,
            nodal_values,
            element_gradients,
            element_rho,
            stats: SolveStats { iterations: 0, residual: 0.0, min_element_rho },
            warnings: Vec::new(),
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn nodal_values(&self) -> &[f64] {
        &self.nodal_values
    }

    pub fn element_gradients(&self) -> &[Vec2] {
        &self.element_gradients
    }

    pub fn element_rho(&self) -> &[f64] {
        &self.element_rho
    }

    pub fn range(&self) -> (f64, f64) {
        self.nodal_values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    }

    pub fn max_gradient_norm(&self) -> f64 {
        self.element_gradients.iter().map(|g| g.norm()).fold(0.0, f64::max)
    }

    /// Constant gradient of the triangle containing `p` (lowest index on ties).
    pub fn gradient_at(&self, p: Point) -> Result<Vec2, FemError> {
        self.mesh.locate(p).map(|t| self.element_gradients[t]).ok_or(FemError::OutsideDomain { x: p.x, y: p.y })
    }

    /// Linear interpolant at `p`.
    pub fn value_at(&self, p: Point) -> Result<f64, FemError> {
        let t = self.mesh.locate(p).ok_or(FemError::OutsideDomain { x: p.x, y: p.y })?;
        let l = self.mesh.barycentric(t, p);
        let tri = self.mesh.triangles()[t];
        Ok((0..3).map(|i| l[i] * self.nodal_values[tri[i]]).sum())
    }

    /// Relative L² distance to `exact`, using the edge-midpoint rule.
    pub fn relative_l2_error(&self, exact: impl Fn(Point) -> f64) -> f64 {
        let mut err = 0.0;
        let mut nrm = 0.0;
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let p = self.mesh.triangle_points(t);
            let area = self.mesh.triangle_area(t);
            let u = tri.map(|v| self.nodal_values[v]);
            for i in 0..3 {
                let j = (i + 1) % 3;
                let m = p[i].midpoint(p[j]);
                let uh = 0.5 * (u[i] + u[j]);
                let ue = exact(m);
                err += area / 3.0 * (uh - ue) * (uh - ue);
                nrm += area / 3.0 * ue * ue;
            }
        }
        if nrm > 0.0 {
            (err / nrm).sqrt()
        } else {
            err.sqrt()
        }
    }

    /// Full residual `K u` per vertex over the unmodified stiffness matrix.
    pub fn nodal_reactions(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.nodal_values.len()];
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let k = element_stiffness(self.mesh.triangle_points(t), self.element_rho[t]);
            for i in 0..3 {
                for j in 0..3 {
                    out[tri[i]] += k[i][j] * self.nodal_values[tri[j]];
                }
            }
        }
        out
    }

    /// Discrete conormal flux leaving the domain through each boundary component.
    pub fn boundary_fluxes(&self) -> BTreeMap<BoundaryMarker, f64> {
        let reactions = self.nodal_reactions();
        let mut out = BTreeMap::new();
        for (v, m) in self.mesh.vertex_markers().into_iter().enumerate() {
            if let Some(m) = m {
                // The reaction (K u)_v is the outward flux ∫ρ ∂ₙu φ_v.
                *out.entry(m).or_insert(0.0) += reactions[v];
            }
        }
        out
    }

    pub fn solution_csv(&self) -> String {
        let mut s = String::from("x,y,u\n");
        for (p, u) in self.mesh.vertices().iter().zip(&self.nodal_values) {
            let _ = writeln!(s, "{:e},{:e},{:e}", p.x, p.y, u);
        }
        s
    }

    pub fn gradient_csv(&self) -> String {
        let mut s = String::from("cx,cy,gx,gy\n");
        for (t, g) in self.element_gradients.iter().enumerate() {
            let c = self.mesh.centroid(t);
            let _ = writeln!(s, "{:e},{:e},{:e},{:e}", c.x, c.y, g.x, g.y);
        }
        s
    }

    pub fn write_solution_csv(&self, path: impl AsRef<Path>) -> Result<(), FemError> {
        std::fs::File::create(path)?.write_all(self.solution_csv().as_bytes())?;
        Ok(())
    }

    pub fn write_gradient_csv(&self, path: impl AsRef<Path>) -> Result<(), FemError> {
        std::fs::File::create(path)?.write_all(self.gradient_csv().as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_element() {
        let k = element_stiffness([Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)], 1.0);
        let want = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - want[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn csr_sums_duplicates() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0), (0, 1, 2.0), (1, 1, 5.0)]);
        assert_eq!(m.get(0, 0), 4.0);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.asymmetry(), 0.0);
        let mut y = [0.0; 2];
        m.mul_vec(&[1.0, 1.0], &mut y);
        assert_eq!(y, [6.0, 7.0]);
    }

    #[test]
    fn pcg_solves_small_spd() {
        let m =
            CsrMatrix::from_triplets(3, vec![(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 2.0)]);
        let b = [1.0, 2.0, 3.0];
        let (x, _, res) = pcg(&m, &b, 1e-12, 100).unwrap();
        assert!(res <= 1e-12);
        let mut ax = [0.0; 3];
        m.mul_vec(&x, &mut ax);
        for i in 0..3 {
            assert!((ax[i] - b[i]).abs() < 1e-10);
        }
    }
}
