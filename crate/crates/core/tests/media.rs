mod common;

use common::*;
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use rand::Rng;
use transmedia::coordmaps::{CoordinateMap, Point3};
use transmedia::media::{
    material_tensors, material_tensors_metric, relative_difference, symmetric_eigenvalues,
    validate_tensors, Handedness, MaterialTensors, TensorField,
};
use transmedia::fields::Grid;

#[test]
fn both_routes_agree_on_random_samples() {
    let mut rng = rng(21);
    let mut worst = 0.0f64;
    let mut n = 0;
    while n < 2000 {
        let map = random_map(&mut rng);
        let p = random_point(&mut rng, 2.5);
        let Ok(jac) = map.jacobian(&p) else { continue };
        let (e1, m1) = (rng.random_range(0.5..3.0), rng.random_range(0.5..3.0));
        let a = material_tensors(&jac, e1, m1).unwrap();
        let b = material_tensors_metric(&jac, e1, m1).unwrap();
        assert_eq!(a.handedness, b.handedness);
        worst = worst
            .max(relative_difference(&a.eps, &b.eps))
            .max(relative_difference(&a.mu, &b.mu));
        n += 1;
    }
    assert!(worst <= 1e-12, "worst {worst}");
}

#[test]
fn metric_route_reproduces_inverse_permeability() {
    // (μ⁻¹)_ij = ±γ_ij/(√γ μ')
    let mut rng = rng(22);
    for _ in 0..100 {
        let map = random_radial(&mut rng);
        let p = random_point(&mut rng, 1.5);
        let jac = map.jacobian(&p).unwrap();
        let t = material_tensors_metric(&jac, 1.0, 2.0).unwrap();
        let mu_inv = jac.gamma_lower * (jac.sign / (jac.gamma.sqrt() * 2.0));
        assert!((t.mu * mu_inv - Matrix3::identity()).amax() < 1e-12);
        let direct = material_tensors(&jac, 1.0, 2.0).unwrap();
        assert!(relative_difference(&direct.mu, &t.mu) < 1e-12);
    }
}

#[test]
fn cloak_tensor_against_polar_closed_form() {
    // ε_r = (r − R1)/r, ε_φ = r/(r − R1), ε_z = (R2/(R2 − R1))² (r − R1)/r
    let (r1, r2) = (0.5, 1.0);
    let map = cloak();
    for (r, phi) in [(0.75, 0.0), (0.6, 1.1), (0.95, -2.4), (0.55, 3.0)] {
        let (c, s) = (f64::cos(phi), f64::sin(phi));
        let p = Point3::new(r * c, r * s, 0.4);
        let t = material_tensors(&map.jacobian(&p).unwrap(), 1.0, 1.0).unwrap();
        let er = (r - r1) / r;
        let ep = r / (r - r1);
        let ez = (r2 / (r2 - r1)).powi(2) * (r - r1) / r;
        let rot = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        let expect = rot * Matrix3::from_diagonal(&Vector3::new(er, ep, ez)) * rot.transpose();
        assert!(relative_difference(&t.eps, &expect) < 1e-13, "r={r}");
        assert_eq!(t.mu, t.eps);
    }
    let t = material_tensors(&map.jacobian(&Point3::new(0.75, 0.0, 0.0)).unwrap(), 1.0, 1.0).unwrap();
    let ev = symmetric_eigenvalues(&t.eps);
    let expect = [0.5 / 1.5, 4.0 / 3.0, 1.5 / 0.5];
    for (a, b) in ev.iter().zip(expect) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn lens_slab_is_left_handed_minus_identity() {
    let map = lens();
    let mut rng = rng(23);
    for _ in 0..200 {
        let p = Point3::new(rng.random_range(0.01..0.99), rng.random_range(-3.0..3.0), 0.0);
        let jac = map.jacobian(&p).unwrap();
        assert_eq!(jac.det_j, -1.0);
        for t in [
            material_tensors(&jac, 1.0, 1.0).unwrap(),
            material_tensors_metric(&jac, 1.0, 1.0).unwrap(),
        ] {
            assert!((t.eps + Matrix3::identity()).amax() <= 1e-12);
            assert!((t.mu + Matrix3::identity()).amax() <= 1e-12);
            assert_eq!(t.handedness, Handedness::Left);
            assert!(validate_tensors(&t, &jac).passed());
        }
    }
}

#[test]
fn agreeing_coordinates_give_background() {
    let map = cloak();
    for p in [Point3::new(1.5, 0.2, 0.0), Point3::new(-0.3, 2.2, 1.0)] {
        let t = material_tensors(&map.jacobian(&p).unwrap(), 2.5, 1.5).unwrap();
        assert_eq!(t.eps, Matrix3::identity() * 2.5);
        assert_eq!(t.mu, Matrix3::identity() * 1.5);
    }
    let t = material_tensors(&lens().jacobian(&Point3::new(-0.4, 0.0, 0.0)).unwrap(), 1.0, 1.0).unwrap();
    assert_eq!(t.eps, Matrix3::identity());
}

#[test]
fn validation_report_cases() {
    let jac = CoordinateMap::Identity.jacobian(&Point3::zeros()).unwrap();
    let report = validate_tensors(&MaterialTensors::uniform(1.0, 1.0), &jac);
    assert!(report.passed());
    let names: Vec<&str> = report.checks.iter().map(|c| c.name).collect();
    for n in ["eps_symmetric", "mu_symmetric", "impedance_match", "handedness", "eigenvalue_sign", "determinant"] {
        assert!(names.contains(&n), "missing {n}");
    }

    let mut bad = MaterialTensors::uniform(1.0, 1.0);
    bad.eps = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 2.0));
    let report = validate_tensors(&bad, &jac);
    assert!(!report.passed());
    assert!(report.failures().iter().any(|c| c.name == "impedance_match"));
}

#[test]
fn tensor_field_skips_hidden_and_interface_points() {
    let grid = Grid::new(Point3::new(-1.0, -1.0, 0.0), [0.25, 0.25, 1.0], [9, 9, 1]).unwrap();
    let field = TensorField::from_map(&cloak(), &grid, 1.0, 1.0).unwrap();
    for i in 0..grid.len() {
        let p = grid.point(i);
        let r = p.x.hypot(p.y);
        let expect_none = r < 0.5 + 1e-12 || (r - 1.0).abs() <= 1e-12;
        assert_eq!(field.cells[i].is_none(), expect_none, "{p:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn orientation_reversal_flips_every_eigenvalue(
        seed in any::<u64>(),
        flip in any::<bool>(),
        eps in 0.2f64..4.0,
    ) {
        let mut rng = rng(seed);
        let map = random_affine(&mut rng, flip);
        let jac = map.jacobian(&random_point(&mut rng, 1.0)).unwrap();
        let t = material_tensors(&jac, eps, eps).unwrap();
        let ev = symmetric_eigenvalues(&t.eps);
        prop_assert_eq!(t.handedness == Handedness::Left, jac.det_j < 0.0);
        prop_assert_eq!(jac.det_j < 0.0, ev.iter().all(|v| *v < 0.0));
        prop_assert_eq!(jac.det_j > 0.0, ev.iter().all(|v| *v > 0.0));
        prop_assert!(validate_tensors(&t, &jac).passed());
    }

    #[test]
    fn determinant_identity(seed in any::<u64>(), eps in 0.2f64..4.0) {
        let mut rng = rng(seed);
        let map = random_map(&mut rng);
        let p = random_point(&mut rng, 2.5);
        if let Ok(jac) = map.jacobian(&p) {
            let t = material_tensors(&jac, eps, 1.0).unwrap();
            let lhs = t.eps.determinant() * jac.det_j;
            let rhs = eps.powi(3);
            prop_assert!(((lhs - rhs) / rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn tensors_are_symmetric(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let map = random_map(&mut rng);
        if let Ok(jac) = map.jacobian(&random_point(&mut rng, 2.5)) {
            let t = material_tensors(&jac, 1.0, 1.0).unwrap();
            let scale = t.eps.amax().max(1.0);
            prop_assert!((t.eps - t.eps.transpose()).amax() <= 1e-12 * scale);
            prop_assert!((t.mu - t.mu.transpose()).amax() <= 1e-12 * scale);
        }
    }
}
