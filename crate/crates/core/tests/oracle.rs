use std::sync::{Arc, OnceLock};

use critflow::critpoint::{winding_along, DEFAULT_G_MIN};
use critflow::fem::{assemble, solve, SolutionField};
use critflow::levelset::ContourPolyline;
use critflow::mesh::generate_mesh;
use critflow::oracle::{
    odd_reflect, pullback_problem, quarter_annulus_problem, quarter_disc_problem, verify_invariance, weak_form_residual, Axis,
};
use critflow::{CoefficientField, CoefficientKind, ConformalMap, DomainSpec, Point};
use num_complex::Complex64;
use proptest::prelude::*;

fn quarter_disc() -> &'static SolutionField {
    static S: OnceLock<SolutionField> = OnceLock::new();
    S.get_or_init(|| quarter_disc_problem(0.05, 1e-12).unwrap())
}

fn annulus() -> &'static SolutionField {
    static S: OnceLock<SolutionField> = OnceLock::new();
    S.get_or_init(|| {
        let mesh = Arc::new(generate_mesh(&DomainSpec::annulus(0.2, 1.0), 0.08).unwrap());
        solve(&assemble(&mesh, &CoefficientField::new(CoefficientKind::RadiusSq).unwrap()).unwrap(), 1e-12, None).unwrap()
    })
}

#[test]
fn odd_reflection_is_idempotent() {
    let once = odd_reflect(quarter_disc(), Axis::X).unwrap();
    let again = odd_reflect(&once, Axis::X).unwrap();
    assert_eq!(once.nodal_values(), again.nodal_values());
    assert_eq!(once.mesh().vertices(), again.mesh().vertices());
    assert_eq!(once.mesh().triangles(), again.mesh().triangles());
}

#[test]
fn odd_reflection_negates_mirrored_values() {
    let once = odd_reflect(quarter_disc(), Axis::X).unwrap();
    let full = odd_reflect(&once, Axis::Y).unwrap();
    assert_eq!(full.mesh().total_area().round(), std::f64::consts::PI.round());
    for (p, u) in full.mesh().vertices().iter().zip(full.nodal_values()) {
        let m = full.value_at(Axis::X.mirror(*p)).unwrap();
        assert!((u + m).abs() < 1e-9, "at {p:?}: {u} vs {m}");
    }
    assert!(weak_form_residual(&full) < 1e-9);
    let h = full.mesh().h();
    for r in [3.0 * h, 4.0 * h, 5.0 * h] {
        let w = winding_along(&full, &ContourPolyline::circle(Point::ORIGIN, r, 64).points, DEFAULT_G_MIN).unwrap();
        assert!((w.value + 1.0).abs() < 1e-9, "winding {} at radius {r}", w.value);
    }
}

#[test]
fn identity_pullback_reproduces_the_weak_form_residual() {
    let sol = quarter_annulus_problem(0.05, 1e-12).unwrap();
    let check = verify_invariance(&sol, &ConformalMap::Identity, 1e-8).unwrap();
    assert_eq!(check.residual.to_bits(), weak_form_residual(&sol).to_bits());
    assert!(check.pass && check.orientation_preserved);
}

#[test]
fn holomorphic_maps_pass_and_controls_fail() {
    let sol = quarter_annulus_problem(0.04, 1e-12).unwrap();
    let square = verify_invariance(&sol, &ConformalMap::Square, 1e-8).unwrap();
    assert!(square.pass, "{square:?}");
    let conj = verify_invariance(&sol, &ConformalMap::Conjugate, 1e-8).unwrap();
    assert!(!conj.pass && !conj.orientation_preserved);
    let shear = verify_invariance(&sol, &ConformalMap::Shear { s: 0.5 }, 1e-8).unwrap();
    assert!(!shear.pass && shear.residual > 1e-6, "{shear:?}");
}

#[test]
fn moebius_through_the_origin_is_singular_on_a_pole() {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let inv = ConformalMap::Moebius { a: zero, b: one, c: one, d: Complex64::new(-0.5, 0.0) };
    let sol = annulus();
    let rho = CoefficientField::new(CoefficientKind::RadiusSq).unwrap();
    assert!(pullback_problem(sol.mesh(), &rho, sol.element_rho(), &inv).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn affine_moebius_scales_areas(ar in 0.3f64..2.0, ai in -1.0f64..1.0, br in -1.0f64..1.0, bi in -1.0f64..1.0, dr in 0.5f64..2.0) {
        let sol = annulus();
        let a = Complex64::new(ar, ai);
        let d = Complex64::new(dr, 0.0);
        let map = ConformalMap::Moebius { a, b: Complex64::new(br, bi), c: Complex64::new(0.0, 0.0), d };
        let rho = CoefficientField::new(CoefficientKind::RadiusSq).unwrap();
        let pulled = pullback_problem(sol.mesh(), &rho, sol.element_rho(), &map).unwrap();
        prop_assert!(!pulled.orientation_reversed);
        let ratio = pulled.mesh.total_area() / sol.mesh().total_area();
        let expected = (a / d).norm_sqr();
        prop_assert!((ratio - expected).abs() <= 1e-10 * expected);
        let check = verify_invariance(sol, &map, 1e-8).unwrap();
        prop_assert!(check.pass, "{:?}", check);
    }

    #[test]
    fn rotations_preserve_the_residual(theta in 0.0f64..std::f64::consts::TAU) {
        let sol = annulus();
        let rot = ConformalMap::Moebius {
            a: Complex64::from_polar(1.0, theta),
            b: Complex64::new(0.0, 0.0),
            c: Complex64::new(0.0, 0.0),
            d: Complex64::new(1.0, 0.0),
        };
        let check = verify_invariance(sol, &rot, 1e-8).unwrap();
        prop_assert!((check.residual - weak_form_residual(sol)).abs() <= 1e-9);
    }
}
