//! Finite-element solutions of div(ρ∇u) = 0 on planar domains with circular
//! holes (u = 1 on the holes, u = 0 outside), and a topological audit of the
//! result: critical points and their indices, level-line windings, boundary
//! normal-derivative signs and level-set components.

pub mod acceptance;
pub mod coefficient;
pub mod critpoint;
pub mod fem;
pub mod geometry;
pub mod levelset;
pub mod mesh;
pub mod oracle;
pub mod pipeline;

pub use coefficient::{CoefficientError, CoefficientField, CoefficientKind};
pub use critpoint::{analyze, AnalysisOptions, CritError, CriticalPoint, CriticalPointReport};
pub use fem::{assemble, solve, FemError, SolutionField};
pub use geometry::{Point, Vec2};
pub use levelset::{extract_level_lines, level_components, ContourPolyline, LevelSetDecomposition};
pub use mesh::{generate_mesh, BoundaryMarker, DomainSpec, HoleSpec, Mesh, MeshError, MeshOptions, OuterShape};
pub use oracle::{ConformalMap, OracleError, RadialExact};
pub use pipeline::{PipelineError, ProblemConfig, RunReport};
