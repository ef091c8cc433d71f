use qac_core::inequality::*;

#[test]
fn canonical_suite_passes() {
    let suite = run_canonical_suite().unwrap();
    for r in suite.reports.iter().filter(|r| !r.passed) {
        eprintln!("{r:?}");
    }
    assert!(suite.passed(), "worst margin {}", suite.worst_margin);
    assert!(suite.worst_margin >= -EXACT_TOLERANCE);
}

#[test]
fn random_suite_passes() {
    let suite = run_random_suite(20240601, 100).unwrap();
    for r in suite.reports.iter().filter(|r| !r.passed) {
        eprintln!("{r:?}");
    }
    assert!(suite.passed());
}

#[test]
fn harmonic_four_point_is_wick() {
    let inst = harmonic_wick_instance().unwrap();
    let r = verify_lebowitz(&inst.action, &[(0, 0), (0, 1), (0, 2), (0, 3)], &inst.quad).unwrap();
    for rep in &r {
        assert!(rep.margin.abs() < 1e-10, "{rep:?}");
    }
}

#[test]
fn antiferromagnet_breaks_fkg() {
    let r = antiferromagnetic_meta_test().unwrap();
    assert!(!r.passed && r.margin < -1e-3, "{r:?}");
}
