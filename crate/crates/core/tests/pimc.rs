use qac_core::lattice::{build_action, build_periodic_action, free_covariance, Boundary, DiscreteAction, ExternalConfiguration, LatticeBox};
use qac_core::model::{DynamicalMatrix, ModelSpec, Potential};
use qac_core::oracle::{exact_expectations_with, Engine, Observable};
use qac_core::pimc::*;
use qac_core::quadrature::QuadratureScheme;

type Pt = (usize, usize);

fn spec(coeffs: Vec<f64>, h: f64, j: f64, beta: f64) -> ModelSpec {
    ModelSpec::uniform(1, 1.0, 1.0, beta, Potential::new(coeffs, h), DynamicalMatrix::NearestNeighbor { j })
}

fn pair(coeffs: Vec<f64>, h: f64, j: f64, boundary: Boundary) -> DiscreteAction {
    build_action(&spec(coeffs, h, j, 1.0), &LatticeBox::line(2, boundary).unwrap(), 3).unwrap()
}

fn params(n_sweeps: usize, seed: u64) -> McParams {
    McParams { n_sweeps, n_burnin: 2_000, master_seed: seed, ..McParams::default() }
}

fn exact_moments(action: &DiscreteAction, sets: &[Vec<Pt>]) -> Vec<f64> {
    let quad = QuadratureScheme::trapezoid_for(action, 24).unwrap();
    let obs: Vec<Observable> = sets.iter().map(|s| Observable::moment(s)).collect();
    exact_expectations_with(action, &obs, &quad, Engine::Auto).unwrap().expectations
}

fn exact_ursell(action: &DiscreteAction, p: [Pt; 4]) -> f64 {
    let mut sets = vec![p.to_vec()];
    sets.extend(p.iter().map(|&x| vec![x]));
    let pairs = [(0, 1, 2, 3), (0, 2, 1, 3), (0, 3, 1, 2)];
    for &(i, j, k, l) in &pairs {
        sets.push(vec![p[i], p[j]]);
        sets.push(vec![p[k], p[l]]);
    }
    let m = exact_moments(action, &sets);
    let mut u = m[0];
    for (n, &(i, j, k, l)) in pairs.iter().enumerate() {
        u -= (m[5 + 2 * n] - m[1 + i] * m[1 + j]) * (m[6 + 2 * n] - m[1 + k] * m[1 + l]);
    }
    u
}

#[test]
fn two_site_moments_match_the_oracle() {
    let a = pair(vec![0.0, 0.5], 0.3, 0.5, Boundary::Zero);
    let pts = [(0, 0), (1, 0), (0, 1), (1, 1)];
    let stats = run_chains(&a, &params(20_000, 11), &correlation_probes(&pts)).unwrap();
    let (lo, hi) = stats.acceptance();
    assert!(lo >= 0.05 && hi <= 0.95);
    let mut misses = 0;
    for (i, &x) in pts.iter().enumerate() {
        let mc = stats.mean(&Probe::moment(&[x])).unwrap();
        misses += (mc.sigmas_to(exact_moments(&a, &[vec![x]])[0]) > 3.0) as usize;
        for &y in &pts[i + 1..] {
            let k = estimate_pair_correlation(&stats, x, y).unwrap();
            let m = exact_moments(&a, &[vec![x, y], vec![x], vec![y]]);
            misses += (k.sigmas_to(m[0] - m[1] * m[2]) > 3.0) as usize;
        }
    }
    let u = estimate_ursell(&stats, pts).unwrap();
    misses += (u.sigmas_to(exact_ursell(&a, pts)) > 3.0) as usize;
    assert!(misses <= 1, "{misses} of 11 outside 3 sigma");
}

#[test]
fn harmonic_site_matches_free_covariance() {
    let a = build_action(&spec(vec![], 0.0, 0.0, 2.0), &LatticeBox::line(1, Boundary::Zero).unwrap(), 4).unwrap();
    let probes = vec![Probe::moment(&[(0, 0), (0, 0)]), Probe::moment(&[(0, 0), (0, 2)]), Probe::moment(&[(0, 1)])];
    let stats = run_chains(&a, &params(20_000, 3), &probes).unwrap();
    let c = free_covariance(1.0, 1.0, 2.0, 4).unwrap();
    assert!(stats.mean(&probes[0]).unwrap().sigmas_to(c[(0, 0)]) < 3.0);
    assert!(stats.mean(&probes[1]).unwrap().sigmas_to(c[(0, 2)]) < 3.0);
    assert!(stats.mean(&probes[2]).unwrap().sigmas_to(0.0) < 3.0);
    let u = estimate_ursell(&stats, [(0, 0), (0, 0), (0, 2), (0, 2)]);
    assert!(u.is_err());
}

#[test]
fn harmonic_ursell_vanishes() {
    let a = pair(vec![], 0.0, 0.4, Boundary::Zero);
    let pts = [(0, 0), (1, 0), (0, 1), (1, 2)];
    let stats = run_chains(&a, &params(20_000, 5), &correlation_probes(&pts)).unwrap();
    assert!(estimate_ursell(&stats, pts).unwrap().sigmas_to(0.0) < 3.0);
}

#[test]
fn convex_even_model_has_nonpositive_ursell_and_positive_correlations() {
    let a = pair(vec![0.5, 1.0], 0.0, 0.7, Boundary::Zero);
    let pts = [(0, 0), (1, 0), (0, 1), (1, 1)];
    let stats = run_chains(&a, &params(20_000, 7), &correlation_probes(&pts)).unwrap();
    let u = estimate_ursell(&stats, pts).unwrap();
    assert!(u.value <= 3.0 * u.error, "{u:?}");
    for &(x, y) in &[((0, 0), (1, 0)), ((0, 0), (1, 1)), ((0, 1), (0, 0))] {
        let k = estimate_pair_correlation(&stats, x, y).unwrap();
        assert!(k.value >= -3.0 * k.error && k.value > 0.0, "{k:?}");
    }
    let zero = stats.mean(&Probe::moment(&[(0, 0)])).unwrap();
    assert!(zero.sigmas_to(0.0) < 3.0);
}

#[test]
fn positive_boundary_reduces_correlations() {
    let coeffs = vec![0.0, 0.5];
    let xi = ExternalConfiguration::constant(&[(vec![-1], 1.5), (vec![2], 1.0)]);
    let free = pair(coeffs.clone(), 0.0, 0.6, Boundary::Zero);
    let pinned = pair(coeffs, 0.0, 0.6, Boundary::External { xi });
    let pts = [(0, 0), (1, 1)];
    let k0 = estimate_pair_correlation(&run_chains(&free, &params(20_000, 9), &correlation_probes(&pts)).unwrap(), pts[0], pts[1]).unwrap();
    let k1 = estimate_pair_correlation(&run_chains(&pinned, &params(20_000, 10), &correlation_probes(&pts)).unwrap(), pts[0], pts[1]).unwrap();
    assert!(k1.value <= k0.value + 3.0 * k0.error.hypot(k1.error), "{k1:?} {k0:?}");
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let a = pair(vec![0.0, 0.5], 0.1, 0.5, Boundary::Zero);
    let probes = correlation_probes(&[(0, 0), (1, 1)]);
    let p = params(2_000, 42);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| run_chains(&a, &p, &probes).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one, four);
    let other = run_chains(&a, &params(2_000, 43), &probes).unwrap();
    assert_ne!(one, other);
}

#[test]
fn merge_is_order_independent() {
    let a = pair(vec![0.0, 0.5], 0.0, 0.5, Boundary::Zero);
    let probes = correlation_probes(&[(0, 0)]);
    let p = params(500, 1);
    let c: Vec<ChainStats> = (0..3).map(|i| sample_chain(&a, &p, &probes, i).unwrap()).collect();
    let left = c[0].merge(&c[1]).unwrap().merge(&c[2]).unwrap();
    let right = c[2].merge(&c[0].merge(&c[1]).unwrap()).unwrap();
    assert_eq!(left, right);
    assert!(c[0].merge(&c[0]).is_err());
}

#[test]
fn too_few_chains_is_rejected() {
    let a = pair(vec![0.0, 0.5], 0.0, 0.5, Boundary::Zero);
    let p = McParams { n_chains: 4, ..params(500, 0) };
    assert!(run_chains(&a, &p, &[]).is_err());
}

#[test]
fn independent_torus_order_parameter() {
    let s = ModelSpec::uniform(2, 1.0, 1.0, 1.0, Potential::new(vec![0.0, 0.5], 0.0), DynamicalMatrix::NearestNeighbor { j: 0.0 });
    let a = build_periodic_action(&s, 1, 3).unwrap();
    let n = a.n_sites() as f64;
    let probes = vec![Probe::BlockMagnetizationSquared];
    let stats = run_chains(&a, &params(20_000, 2), &probes).unwrap();
    let single = build_action(&spec(vec![0.0, 0.5], 0.0, 0.0, 1.0), &LatticeBox::line(1, Boundary::Zero).unwrap(), 3).unwrap();
    let x2 = exact_moments(&single, &[vec![(0, 0), (0, 0)]])[0];
    let est = estimate_order_parameter(&stats, &LatticeBox::torus(2, 1).unwrap()).unwrap();
    assert!(est.sigmas_to(x2 / n) < 3.0, "{est:?} vs {}", x2 / n);
    assert!(estimate_order_parameter(&stats, &LatticeBox::line(4, Boundary::Zero).unwrap()).is_err());
}

#[test]
fn torus_sites_are_equivalent() {
    let s = ModelSpec::uniform(1, 1.0, 1.0, 1.0, Potential::new(vec![0.0, 0.5], 0.4), DynamicalMatrix::NearestNeighbor { j: 0.3 });
    let a = build_periodic_action(&s, 2, 3).unwrap();
    let probes: Vec<Probe> = (0..a.n_sites()).map(|l| Probe::moment(&[(l, 0)])).collect();
    let stats = run_chains(&a, &params(20_000, 8), &probes).unwrap();
    let m0 = stats.mean(&probes[0]).unwrap();
    assert!(m0.value > 0.0);
    for p in &probes[1..] {
        assert!(stats.mean(p).unwrap().sigmas_from(&m0) < 3.0);
    }
}
