use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use critflow::acceptance::{random_domain, synthetic_field};
use critflow::coefficient::{CoefficientField, CoefficientKind, Interval};
use critflow::critpoint::{winding_along, AnalyticGradient, DEFAULT_G_MIN};
use critflow::fem::{assemble, assemble_general, marker_dirichlet, solve, SolutionField};
use critflow::geometry::{polygon_area, winding_number, Point};
use critflow::levelset::{extract_level_lines, level_components, ContourPolyline, Orientation};
use critflow::mesh::io::{mesh_to_string, parse_mesh};
use critflow::mesh::{generate_mesh, BoundaryMarker, DomainSpec, Mesh};
use critflow::oracle::RadialExact;
use critflow::pipeline::three_hole_disc;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn domain(seed: u64) -> DomainSpec {
    random_domain(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn solved(mesh: Mesh, rho: &CoefficientField) -> SolutionField {
    solve(&assemble(&Arc::new(mesh), rho).unwrap(), 1e-10, None).unwrap()
}

fn annulus_solution() -> &'static SolutionField {
    static S: OnceLock<SolutionField> = OnceLock::new();
    S.get_or_init(|| {
        let rho = CoefficientField::new(CoefficientKind::SmoothX2).unwrap();
        solved(generate_mesh(&DomainSpec::annulus(0.05, 1.0), 0.05).unwrap(), &rho)
    })
}

fn three_hole_solution() -> &'static SolutionField {
    static S: OnceLock<SolutionField> = OnceLock::new();
    S.get_or_init(|| {
        let rho = CoefficientField::new(CoefficientKind::RadiusSq).unwrap();
        solved(generate_mesh(&three_hole_disc(), 0.04).unwrap(), &rho)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mesh_area_matches_domain(seed in any::<u64>(), h in 0.06f64..0.15) {
        let spec = domain(seed);
        let mesh = generate_mesh(&spec, h).unwrap();
        let rel = (mesh.total_area() - spec.area()).abs() / spec.area();
        prop_assert!(rel <= 2.0 * h * h, "relative area error {rel}");
    }

    #[test]
    fn boundary_loops_have_domain_on_the_left(seed in any::<u64>(), h in 0.06f64..0.15) {
        let spec = domain(seed);
        let mesh = generate_mesh(&spec, h).unwrap();
        let loops = mesh.boundary_loops();
        prop_assert_eq!(loops.len(), spec.hole_count() + 1);
        for (marker, ids) in loops {
            let poly: Vec<Point> = ids.iter().map(|&v| mesh.vertices()[v]).collect();
            match marker {
                BoundaryMarker::Exterior => {
                    prop_assert!(polygon_area(&poly) > 0.0);
                    prop_assert_eq!(winding_number(&poly, poly_inside(&spec)), 1);
                }
                BoundaryMarker::Hole(k) => {
                    prop_assert!(polygon_area(&poly) < 0.0);
                    prop_assert_eq!(winding_number(&poly, spec.holes[k - 1].center), -1);
                }
            }
        }
    }

    #[test]
    fn mesh_text_round_trip(seed in any::<u64>(), h in 0.06f64..0.2) {
        let mesh = generate_mesh(&domain(seed), h).unwrap();
        let text = mesh_to_string(&mesh);
        let back = parse_mesh(&text).unwrap();
        prop_assert_eq!(back.vertices(), mesh.vertices());
        prop_assert_eq!(back.triangles(), mesh.triangles());
        prop_assert_eq!(back.boundary_edges(), mesh.boundary_edges());
        prop_assert_eq!(back.corner_vertex_ids(), mesh.corner_vertex_ids());
        prop_assert_eq!(mesh_to_string(&back), text);
    }

    #[test]
    fn flux_balance_and_maximum_principle(seed in any::<u64>(), h in 0.07f64..0.15) {
        let spec = domain(seed);
        prop_assume!(spec.hole_count() > 0);
        let sol = solved(generate_mesh(&spec, h).unwrap(), &CoefficientField::new(CoefficientKind::RadiusSq).unwrap());
        let fluxes = sol.boundary_fluxes();
        let total: f64 = fluxes.values().sum();
        let scale = fluxes.values().fold(0.0f64, |a, f| a.max(f.abs()));
        prop_assert!(total.abs() <= 1e-8 * scale, "flux imbalance {total:e}");
        let (lo, hi) = sol.range();
        prop_assert!(lo >= -1e-9 && hi <= 1.0 + 1e-9);
    }

    #[test]
    fn comparison_principle_in_boundary_data(seed in any::<u64>(), h in 0.07f64..0.15) {
        let spec = domain(seed);
        prop_assume!(spec.hole_count() > 0);
        let mesh = Arc::new(generate_mesh(&spec, h).unwrap());
        let rho = vec![1.0; mesh.triangles().len()];
        let full = solve(&assemble_general(&mesh, rho.clone(), marker_dirichlet(&mesh, 1.0), 1), 1e-12, None).unwrap();
        let half = solve(&assemble_general(&mesh, rho, marker_dirichlet(&mesh, 0.5), 1), 1e-12, None).unwrap();
        for (a, b) in full.nodal_values().iter().zip(half.nodal_values()) {
            prop_assert!(*a >= *b - 1e-9);
            prop_assert!((0.5 * a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn stiffness_is_symmetric(seed in any::<u64>(), h in 0.07f64..0.2) {
        let mesh = Arc::new(generate_mesh(&domain(seed), h).unwrap());
        let sys = assemble(&mesh, &CoefficientField::new(CoefficientKind::LipschitzAbsX).unwrap()).unwrap();
        prop_assert_eq!(sys.matrix.asymmetry(), 0.0);
    }

    #[test]
    fn solution_is_invariant_under_coefficient_scaling(log_c in -3.0f64..3.0) {
        let base = annulus_solution();
        let rho = CoefficientField::new(CoefficientKind::SmoothX2).unwrap().scaled(10f64.powf(log_c)).unwrap();
        let sol = solve(&assemble(base.mesh_arc(), &rho).unwrap(), 1e-10, None).unwrap();
        let diff = base.nodal_values().iter().zip(sol.nodal_values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-7, "max change {diff:e}");
    }

    #[test]
    fn winding_is_additive_over_zeros(seed in any::<u64>(), n in 1usize..5, samples in 8usize..64) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut zeros: Vec<(Point, bool)> = Vec::new();
        while zeros.len() < n {
            let p = Point::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6));
            if zeros.iter().all(|(q, _)| q.dist(p) > 0.2) {
                zeros.push((p, rng.gen_bool(0.5)));
            }
        }
        let field = AnalyticGradient(|p: Point| synthetic_field(&zeros, p));
        let outer = winding_along(&field, &ContourPolyline::circle(Point::ORIGIN, 1.0, samples).points, DEFAULT_G_MIN).unwrap();
        let inner: f64 = zeros
            .iter()
            .map(|(a, _)| winding_along(&field, &ContourPolyline::circle(*a, 0.05, samples).points, DEFAULT_G_MIN).unwrap().value)
            .sum();
        prop_assert!((outer.value - inner).abs() < 1e-9);
    }

    #[test]
    fn winding_is_rotation_equivariant(theta in 0.0f64..(2.0 * PI), cx in -0.3f64..0.3, cy in -0.3f64..0.3, r in 0.05f64..0.5) {
        // ∇ of Re(z³)
        let f = |p: Point| Point::new(3.0 * (p.x * p.x - p.y * p.y), -6.0 * p.x * p.y);
        let c = Point::new(cx, cy);
        prop_assume!(c.norm() > 1e-3 && (c.norm() - r).abs() > 0.02);
        let base = winding_along(&AnalyticGradient(f), &ContourPolyline::circle(c, r, 48).points, DEFAULT_G_MIN).unwrap();
        let rotated = AnalyticGradient(|p: Point| f(p.rotated(-theta)).rotated(theta));
        let turned = winding_along(&rotated, &ContourPolyline::circle(c.rotated(theta), r, 48).points, DEFAULT_G_MIN).unwrap();
        prop_assert!((base.value - turned.value).abs() < 1e-9);
        let expected = if c.norm() < r { -2.0 } else { 0.0 };
        prop_assert!((base.value - expected).abs() < 1e-9);
    }

    #[test]
    fn annulus_level_lines_are_single_closed_curves(level in 0.01f64..0.99) {
        let sol = annulus_solution();
        let lines = extract_level_lines(sol, level);
        prop_assert_eq!(lines.len(), 1);
        prop_assert!(lines[0].closed);
        prop_assert_eq!(lines[0].orientation, Orientation::Ccw);
        for p in &lines[0].points {
            prop_assert!((sol.value_at(*p).unwrap() - level).abs() < 1e-9);
        }
        let d = level_components(sol, level);
        prop_assert_eq!(d.k_plus, 1);
        prop_assert_eq!(d.sublevel_components, 1);
    }

    #[test]
    fn superlevel_components_touch_holes(level in 0.02f64..0.98) {
        let sol = three_hole_solution();
        let d = level_components(sol, level);
        prop_assert_eq!(d.sublevel_components, 1);
        prop_assert!(d.k_plus >= 1 && d.k_plus <= 3);
        for c in &d.superlevel_components {
            prop_assert!(!c.holes.is_empty());
        }
    }

    #[test]
    fn coefficient_bounds_enclose_values(x0 in -1.0f64..1.0, y0 in -1.0f64..1.0, w in 0.0f64..0.5, hgt in 0.0f64..0.5, s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let kinds = [
            CoefficientKind::SmoothX2,
            CoefficientKind::LipschitzAbsX,
            CoefficientKind::RadiusSq,
            CoefficientKind::Radius,
            CoefficientKind::DistToPoint { point: Point::new(2.0, -1.0) },
            CoefficientKind::PiecewiseRadial { r0: 0.05, r1: 0.5, rho_minus: 1.0, rho_plus: 21.0 },
            CoefficientKind::PiecewiseHalfplane { y1: 0.1, rho_minus: 1.0, rho_plus: 1001.0 },
            CoefficientKind::Custom { expr: "1 + x^2 / (2 + abs(y)) - sqrt(x*x + y*y) / 4".into() },
        ];
        let p = Point::new(x0 + s * w, y0 + t * hgt);
        for k in kinds {
            let f = CoefficientField::new(k).unwrap();
            let b = f.bounds(Interval::new(x0, x0 + w), Interval::new(y0, y0 + hgt));
            let v = f.eval(p).unwrap();
            prop_assert!(b.lo <= v + 1e-12 && v <= b.hi + 1e-12, "{} at {:?}: {} not in {:?}", f.name(), p, v, b);
        }
    }

    #[test]
    fn essential_lower_bound_is_a_lower_bound(seed in any::<u64>(), x in -1.5f64..1.5, y in -1.5f64..1.5) {
        let spec = domain(seed);
        let p = Point::new(x, y);
        prop_assume!(spec.contains(p));
        let f = CoefficientField::new(CoefficientKind::DistToPoint { point: Point::new(0.3, -0.2) }).unwrap();
        let eps = 0.05;
        prop_assume!(p.dist(Point::new(0.3, -0.2)) > eps);
        let lb = f.essential_lower_bound(&spec, eps, 0.1);
        prop_assert!(lb <= f.eval(p).unwrap() + 1e-12);
    }

    #[test]
    fn radial_gradient_never_vanishes(r in 0.05f64..=1.0, theta in 0.0f64..(2.0 * PI), ratio in -3.0f64..3.0) {
        let e = RadialExact::new(0.05, 0.5, 1.0, 10f64.powf(ratio)).unwrap();
        let g = e.grad(Point::polar(r, theta)).unwrap();
        prop_assert!(g.norm() >= e.a_plus.abs().min(e.a_minus.abs()) * 0.999);
        prop_assert!((e.rho_minus * e.a_minus - e.rho_plus * e.a_plus).abs() <= 1e-12 * e.rho_minus * e.a_minus.abs());
        let left = 1.0 + e.a_minus * (e.r1 / e.r0).ln();
        prop_assert!((left - e.a_plus * e.r1.ln()).abs() <= 1e-12);
    }
}

/// A point inside the outer shape, away from the holes.
fn poly_inside(spec: &DomainSpec) -> Point {
    let c = spec.outer.center();
    let r = spec.outer.radius();
    (0..64)
        .flat_map(|i| (1..8).map(move |j| Point::polar(r * j as f64 / 8.0, 2.0 * PI * i as f64 / 64.0) + c))
        .find(|&p| spec.contains(p))
        .expect("domain has interior")
}
