use qac_core::lattice::{build_action, Boundary, DiscreteAction, LatticeBox};
use qac_core::leeyang::*;
use qac_core::model::{DynamicalMatrix, ModelSpec, Potential};
use qac_core::quadrature::QuadratureScheme;

fn line(sites: usize, p: usize, coeffs: Vec<f64>, j: f64, beta: f64) -> DiscreteAction {
    let spec = ModelSpec::uniform(1, 1.0, 1.0, beta, Potential::new(coeffs, 0.0), DynamicalMatrix::NearestNeighbor { j });
    build_action(&spec, &LatticeBox::line(sites, Boundary::Zero).unwrap(), p).unwrap()
}

#[test]
fn cubic_condition_on_a_grid() {
    let a = 1.0;
    let mut count = 0;
    for i in 0..10 {
        let b2 = -1.0 + 0.5 * i as f64;
        for k in 0..10 {
            let b1 = -2.0 + 0.25 * k as f64;
            let got = lee_yang_condition(&[b1, b2, 1.0], a).unwrap().holds;
            let expected = b2 >= 0.0 && b1 + a / 2.0 <= b2 * b2 / 3.0;
            assert_eq!(got, expected, "b1 = {b1}, b2 = {b2}");
            count += 1;
        }
    }
    assert_eq!(count, 100);
}

#[test]
fn condition_is_stable_off_the_boundary() {
    let a = 1.0;
    for (b1, b2) in [(0.1, 1.0), (0.5, 1.0), (-0.7, 0.3), (2.0, 1.5)] {
        let base = lee_yang_condition(&[b1, b2, 1.0], a).unwrap().holds;
        for d in [1e-10, -1e-10] {
            assert_eq!(lee_yang_condition(&[b1 + d, b2 - d, 1.0 + d], a).unwrap().holds, base);
        }
    }
}

#[test]
fn glimm_jaffe_polynomial_fails() {
    for alpha in [0.1, 1.0, 10.0] {
        let r = check_laguerre_condition(&[alpha + 1.0, -2.0, 1.0], 0.0).unwrap();
        assert!(!r.holds);
        assert!(r.witness.is_none());
    }
}

#[test]
fn witness_factors_the_shifted_derivative() {
    // v = t^3 + 2 t^2 - t, a = 1: b + 3t^2 + 4t - 1/2 with b = 1/2 gives t (3t + 4).
    let r = lee_yang_condition(&[-1.0, 2.0, 1.0], 1.0).unwrap();
    assert!(r.holds);
    assert!((r.shift.unwrap() - 0.5).abs() < 1e-15);
    let w = r.witness.unwrap();
    assert!(w.is_admissible());
    assert_eq!(w.n, 1);
    for t in [0.3, 1.0, 2.5] {
        assert!((w.eval(t) - t * (3.0 * t + 4.0)).abs() < 1e-12);
    }
}

#[test]
fn gaussian_site_has_no_trusted_zeros() {
    let a = line(1, 4, vec![], 0.0, 1.0);
    let quad = QuadratureScheme::trapezoid_for(&a, 48).unwrap();
    let r = locate_partition_zeros(&a, &quad, 12).unwrap();
    assert_eq!(r.classification, ZeroClass::ConsistentVacuous);
    // Z(h)/Z(0) = exp(<S^2> h^2 / 2).
    let s2 = 2.0 * r.coefficients[1];
    for (n, c) in r.coefficients.iter().enumerate() {
        let exact = (s2 / 2.0).powi(n as i32) / (1..=n).map(|k| k as f64).product::<f64>();
        assert!((c - exact).abs() < 1e-8 * exact + 1e-14, "n = {n}");
    }
}

fn matched_roots(a: &ZeroReport, b: &ZeroReport) -> bool {
    a.in_radius.iter().all(|&(re, im)| {
        b.roots.iter().any(|&(r2, i2)| (re - r2).hypot(im - i2) < 1e-6 * re.hypot(im).max(1.0))
    })
}

#[test]
fn single_site_double_well_zeros_are_negative() {
    let a = line(1, 4, vec![-1.5, 0.25], 0.0, 2.0);
    let quad = QuadratureScheme::trapezoid_for(&a, 64).unwrap();
    let r10 = locate_partition_zeros(&a, &quad, 10).unwrap();
    let r12 = locate_partition_zeros(&a, &quad, 12).unwrap();
    assert_eq!(r10.classification, ZeroClass::Consistent);
    assert_eq!(r12.classification, ZeroClass::Consistent);
    assert!(matched_roots(&r10, &r12));
}

#[test]
fn coupled_pair_zeros_are_negative() {
    let a = line(2, 4, vec![-1.0, 0.5], 0.5, 1.0);
    let quad = QuadratureScheme::trapezoid_for(&a, 16).unwrap();
    let r = locate_partition_zeros(&a, &quad, 12).unwrap();
    assert_eq!(r.classification, ZeroClass::Consistent);
    assert!(!r.in_radius.is_empty());
}

#[test]
fn classification_survives_rescaling() {
    let a = line(1, 4, vec![-1.5, 0.25], 0.0, 2.0);
    let quad = QuadratureScheme::trapezoid_for(&a, 64).unwrap();
    let base = locate_partition_zeros(&a, &quad, 12).unwrap();
    for c in [0.5_f64, 3.0] {
        let scaled: Vec<f64> = base.coefficients.iter().enumerate().map(|(n, v)| v * c.powi(2 * n as i32)).collect();
        let r = classify_series(&scaled).unwrap();
        assert_eq!(r.classification, base.classification);
        assert_eq!(r.in_radius.len(), base.in_radius.len());
        for (z, w) in r.in_radius.iter().zip(&base.in_radius) {
            assert!((z.0 * c * c - w.0).abs() < 1e-8 * w.0.abs());
        }
    }
}

#[test]
fn zeros_need_even_potential() {
    let a = line(1, 4, vec![0.0, 1.0], 0.0, 1.0).with_uniform_field(0.2);
    let quad = QuadratureScheme::trapezoid_for(&a, 32).unwrap();
    assert!(locate_partition_zeros(&a, &quad, 6).is_err());
}

fn pressure_checks(a: &DiscreteAction, q: usize) {
    let quad = QuadratureScheme::trapezoid_for(&a.with_uniform_field(1.2), q).unwrap();
    let grid: Vec<f64> = (-10..=10).map(|k| k as f64 * 0.1).collect();
    let curve = pressure_curve(a, &grid, &quad).unwrap();
    assert!(curve.evenness_defect() < 1e-12, "{}", curve.evenness_defect());
    assert!(curve.second_differences().iter().all(|d| *d >= -1e-9));
    // Central differences converge to the magnetization at second order.
    for &h in &[0.3, 0.7] {
        let err = |step: f64| {
            let c = pressure_curve(a, &[h - step, h, h + step], &quad).unwrap();
            ((c.pressure[2] - c.pressure[0]) / (2.0 * step) - c.magnetization[1]).abs()
        };
        let (e1, e2) = (err(0.1), err(0.05));
        assert!(e1 < 1e-2 && e2 < e1 / 3.0, "{e1} {e2}");
    }
}

#[test]
fn pressure_even_convex_and_differentiable() {
    pressure_checks(&line(1, 4, vec![0.0, 1.0], 0.0, 1.0), 48);
    pressure_checks(&line(2, 3, vec![-0.5, 0.5], 0.5, 1.0), 18);
}

#[test]
fn coupling_raises_the_pressure() {
    let a = line(2, 3, vec![0.0, 0.5], 0.6, 1.0);
    let quad = QuadratureScheme::trapezoid_for(&a, 18).unwrap();
    let r = van_hove_pressure_check(&a, &[0, 1], &quad, 6).unwrap();
    assert!(r.monotone && r.convex);
    assert!(r.pressure[6] > r.pressure[0]);
    assert!(r.within_slope && r.within_coupling_bound);
    assert!(r.slope_at_one <= r.coupling_bound + 1e-12);
}

#[test]
fn same_block_gives_no_change() {
    let a = line(2, 3, vec![0.0, 0.5], 0.6, 1.0);
    let quad = QuadratureScheme::trapezoid_for(&a, 18).unwrap();
    let r = van_hove_pressure_check(&a, &[0, 0], &quad, 4).unwrap();
    assert!(r.pressure.iter().all(|p| (p - r.pressure[0]).abs() < 1e-14));
    assert_eq!(r.slope_at_one, 0.0);
}

#[test]
fn single_site_pressure_bounds_the_pair() {
    let one = line(1, 3, vec![-0.5, 0.5], 0.0, 1.0);
    let two = line(2, 3, vec![-0.5, 0.5], 0.8, 1.0);
    let quad = QuadratureScheme::trapezoid_for(&two, 18).unwrap();
    let p1 = pressure_curve(&one, &[0.0], &quad).unwrap().pressure[0];
    let p2 = pressure_curve(&two, &[0.0], &quad).unwrap().pressure[0];
    let r = van_hove_pressure_check(&two, &[0, 1], &quad, 2).unwrap();
    assert!((r.pressure[0] - p1).abs() < 1e-12);
    assert!((r.pressure[2] - p2).abs() < 1e-12);
    assert!(p1 <= p2 && p2 - p1 <= r.slope_at_one && r.slope_at_one <= r.coupling_bound);
    assert!(van_hove_pressure_check(&line(2, 3, vec![0.0, 0.5], -0.3, 1.0), &[0, 1], &quad, 2).is_err());
}

proptest::proptest! {
    #[test]
    fn cubic_condition_matches_closed_form(b1 in -3.0f64..3.0, b2 in -2.0f64..3.0, a in 0.1f64..4.0) {
        let boundary = b1 + a / 2.0 - b2 * b2 / 3.0;
        proptest::prop_assume!(boundary.abs() > 1e-6 && b2.abs() > 1e-6);
        let expected = b2 > 0.0 && boundary < 0.0;
        proptest::prop_assert_eq!(lee_yang_condition(&[b1, b2, 1.0], a).unwrap().holds, expected);
    }
}
