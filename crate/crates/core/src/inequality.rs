//! Checks of the ferromagnetic correlation inequalities on exact and Monte
//! Carlo expectations.
//!
//! Every check returns an [`InequalityReport`] whose `margin` is the
//! larger side minus the smaller side, so a sound inequality has
//! `margin >= 0` up to the tolerance of the method.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::brillouin::LaplaceQuadrature;
use crate::criteria::beta_star_rhs;
use crate::error::{Error, Result};
use crate::lattice::{build_action, Boundary, DiscreteAction, LatticeBox};
use crate::model::{DynamicalMatrix, ModelSpec, Potential};
use crate::oracle::{exact_expectations, Observable};
use crate::pimc::Measurement;
use crate::quadrature::QuadratureScheme;

pub const EXACT_TOLERANCE: f64 = 1e-9;
pub const MC_SIGMAS: f64 = 3.0;
pub const MONOTONICITY_BUMPS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo { error: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct InequalityReport {
    pub name: String,
    pub instance: String,
    /// The side claimed to be larger.
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub passed: bool,
    /// Passed only because the bound carries no information.
    pub vacuous: bool,
    pub tolerance: f64,
    pub method: Method,
}

impl InequalityReport {
    fn exact(name: &str, instance: &str, lhs: f64, rhs: f64) -> Self {
        let margin = lhs - rhs;
        Self {
            name: name.into(),
            instance: instance.into(),
            lhs,
            rhs,
            margin,
            passed: margin >= -EXACT_TOLERANCE,
            vacuous: false,
            tolerance: EXACT_TOLERANCE,
            method: Method::Exact,
        }
    }

    fn monte_carlo(name: &str, instance: &str, lhs: f64, rhs: f64, error: f64) -> Self {
        let margin = lhs - rhs;
        Self {
            name: name.into(),
            instance: instance.into(),
            lhs,
            rhs,
            margin,
            passed: margin >= -MC_SIGMAS * error,
            vacuous: false,
            tolerance: MC_SIGMAS * error,
            method: Method::MonteCarlo { error },
        }
    }
}

/// Real polynomial in the slice variables, `sum_k c_k prod x_{l,t}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Polynomial {
    pub terms: Vec<(f64, Vec<(usize, usize)>)>,
}

impl Polynomial {
    pub fn constant(c: f64) -> Self {
        Self { terms: vec![(c, Vec::new())] }
    }

    pub fn monomial(points: &[(usize, usize)]) -> Self {
        Self { terms: vec![(1.0, points.to_vec())] }
    }

    /// `sum_i x_{p_i}`.
    pub fn linear(points: &[(usize, usize)]) -> Self {
        Self { terms: points.iter().map(|&p| (1.0, vec![p])).collect() }
    }

    /// Sum of every slice variable of the action.
    pub fn total(action: &DiscreteAction) -> Self {
        let pts: Vec<_> = (0..action.n_sites()).flat_map(|l| (0..action.p).map(move |t| (l, t))).collect();
        Self::linear(&pts)
    }

    pub fn plus(&self, other: &Polynomial) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self { terms }
    }

    pub fn times(&self, other: &Polynomial) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (a, pa) in &self.terms {
            for (b, pb) in &other.terms {
                let mut pts = pa.clone();
                pts.extend_from_slice(pb);
                terms.push((a * b, pts));
            }
        }
        Self { terms }
    }

    pub fn eval(&self, x: &[f64], p: usize) -> f64 {
        self.terms
            .iter()
            .map(|(c, pts)| c * pts.iter().map(|&(l, t)| x[l * p + t]).product::<f64>())
            .sum()
    }
}

/// Exact expectations of several polynomials in one oracle pass.
pub fn polynomial_expectations(action: &DiscreteAction, polys: &[&Polynomial], quad: &QuadratureScheme) -> Result<Vec<f64>> {
    let mut obs = Vec::new();
    let mut spans = Vec::new();
    for poly in polys {
        let start = obs.len();
        for (_, pts) in &poly.terms {
            obs.push(Observable::moment(pts));
        }
        spans.push(start);
    }
    let vals = exact_expectations(action, &obs, quad)?;
    Ok(polys
        .iter()
        .zip(spans)
        .map(|(poly, start)| poly.terms.iter().enumerate().map(|(k, (c, _))| c * vals[start + k]).sum())
        .collect())
}

/// Spot-check that `f` does not decrease when one coordinate is raised.
pub fn spot_check_increasing(f: &Polynomial, action: &DiscreteAction, quad: &QuadratureScheme, seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = action.n_dof();
    let lo = quad.nodes.first().copied().unwrap_or(-1.0);
    let hi = quad.nodes.last().copied().unwrap_or(1.0);
    let mut x = vec![0.0; n];
    for _ in 0..MONOTONICITY_BUMPS {
        x.iter_mut().for_each(|v| *v = rng.random_range(lo..=hi));
        let i = rng.random_range(0..n);
        let before = f.eval(&x, action.p);
        x[i] += rng.random::<f64>() * (hi - lo) / 4.0;
        let after = f.eval(&x, action.p);
        if after < before - 1e-12 * before.abs().max(1.0) {
            return false;
        }
    }
    true
}

fn require_ferromagnetic(action: &DiscreteAction) -> Result<()> {
    if !action.is_ferromagnetic() {
        return Err(Error::Precondition("the correlation inequalities need ferromagnetic couplings".into()));
    }
    Ok(())
}

fn describe(action: &DiscreteAction) -> String {
    format!("{} sites, P = {}", action.n_sites(), action.p)
}

/// `<fg> >= <f><g>` for increasing `f`, `g` under a ferromagnetic action.
pub fn verify_fkg(action: &DiscreteAction, f: &Polynomial, g: &Polynomial, quad: &QuadratureScheme) -> Result<InequalityReport> {
    require_ferromagnetic(action)?;
    for (name, h, seed) in [("f", f, 1), ("g", g, 2)] {
        if !spot_check_increasing(h, action, quad, seed) {
            return Err(Error::Precondition(format!("{name} failed the monotonicity spot check")));
        }
    }
    verify_fkg_unchecked(action, f, g, quad)
}

/// The FKG comparison without any precondition, for testing the harness.
pub fn verify_fkg_unchecked(action: &DiscreteAction, f: &Polynomial, g: &Polynomial, quad: &QuadratureScheme) -> Result<InequalityReport> {
    let fg = f.times(g);
    let v = polynomial_expectations(action, &[&fg, f, g], quad)?;
    Ok(InequalityReport::exact("fkg", &describe(action), v[0], v[1] * v[2]))
}

fn require_gks(action: &DiscreteAction) -> Result<()> {
    require_ferromagnetic(action)?;
    if action.potentials.iter().any(|p| p.field < 0.0) {
        return Err(Error::Precondition("GKS needs nonnegative fields".into()));
    }
    if action.boundary_field.iter().flatten().any(|&v| v < 0.0) {
        return Err(Error::Precondition("GKS needs a nonnegative boundary".into()));
    }
    Ok(())
}

/// First and second Griffiths inequalities for the monomials `a` and `b`.
pub fn verify_gks(
    action: &DiscreteAction,
    a: &[(usize, usize)],
    b: &[(usize, usize)],
    quad: &QuadratureScheme,
) -> Result<Vec<InequalityReport>> {
    require_gks(action)?;
    let mut ab = a.to_vec();
    ab.extend_from_slice(b);
    let obs = [Observable::moment(a), Observable::moment(b), Observable::moment(&ab)];
    let v = exact_expectations(action, &obs, quad)?;
    let inst = describe(action);
    Ok(vec![
        InequalityReport::exact("gks-1", &format!("{inst}, <A>"), v[0], 0.0),
        InequalityReport::exact("gks-1", &format!("{inst}, <B>"), v[1], 0.0),
        InequalityReport::exact("gks-1", &format!("{inst}, <AB>"), v[2], 0.0),
        InequalityReport::exact("gks-2", &inst, v[2], v[0] * v[1]),
    ])
}

/// All partitions of `0..n` into unordered pairs.
pub fn pairings(n: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(rest: &[usize], acc: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if rest.is_empty() {
            out.push(acc.clone());
            return;
        }
        let first = rest[0];
        for k in 1..rest.len() {
            let other: Vec<usize> = rest[1..].iter().copied().filter(|&v| v != rest[k]).collect();
            acc.push((first, rest[k]));
            rec(&other, acc, out);
            acc.pop();
        }
    }
    let mut out = Vec::new();
    if n % 2 == 0 {
        rec(&(0..n).collect::<Vec<_>>(), &mut Vec::new(), &mut out);
    }
    out
}

fn require_lebowitz(action: &DiscreteAction) -> Result<()> {
    require_ferromagnetic(action)?;
    if !action.all_potentials_even() {
        return Err(Error::Precondition("Gaussian domination needs zero field".into()));
    }
    if action.potentials.iter().any(|p| !p.even_part_convex_in_t()) {
        return Err(Error::Precondition("Gaussian domination needs v convex in x^2".into()));
    }
    if action.boundary_field.iter().flatten().any(|&v| v != 0.0) {
        return Err(Error::Precondition("Gaussian domination is checked with zero boundary".into()));
    }
    Ok(())
}

/// Gaussian domination of the moment of `points` by its Wick sum, and for
/// four points the sign of the Ursell function.
pub fn verify_lebowitz(action: &DiscreteAction, points: &[(usize, usize)], quad: &QuadratureScheme) -> Result<Vec<InequalityReport>> {
    require_lebowitz(action)?;
    let n = points.len();
    if n == 0 || n % 2 == 1 {
        return Err(Error::InvalidParameter(format!("need an even, positive number of points, got {n}")));
    }
    let mut obs = vec![Observable::moment(points)];
    let mut pair_index = vec![vec![0usize; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            pair_index[i][j] = obs.len();
            obs.push(Observable::moment(&[points[i], points[j]]));
        }
    }
    let v = exact_expectations(action, &obs, quad)?;
    let two = |i: usize, j: usize| v[pair_index[i.min(j)][i.max(j)]];
    let wick: f64 = pairings(n).iter().map(|pp| pp.iter().map(|&(i, j)| two(i, j)).product::<f64>()).sum();
    let inst = describe(action);
    let mut out = vec![InequalityReport::exact("gaussian-domination", &inst, wick, v[0])];
    if n == 4 {
        // Zero field: the means vanish and K is the plain two-point moment.
        let ursell = v[0] - two(0, 1) * two(2, 3) - two(0, 2) * two(1, 3) - two(0, 3) * two(1, 2);
        out.push(InequalityReport::exact("ursell", &inst, 0.0, ursell));
    }
    Ok(out)
}

/// Inputs of the infrared sanity check on a periodic box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct InfraredInputs {
    pub d: usize,
    pub mass: f64,
    pub coupling: f64,
    pub beta: f64,
    pub t_star: f64,
}

/// `P_Lambda >= <x^2> - (1/2)(2 pi)^{-d} int (2mJE)^{-1/2} coth(beta sqrt(JE/2m))`
/// and `<x^2> >= t*`, both within Monte Carlo errors.
pub fn verify_infrared_sanity(
    inputs: &InfraredInputs,
    single_site_variance: &Measurement,
    order_parameter: &Measurement,
    quad: &LaplaceQuadrature,
) -> Result<Vec<InequalityReport>> {
    if !(inputs.coupling > 0.0) {
        return Err(Error::Precondition("the infrared bound needs J > 0".into()));
    }
    let integral = beta_star_rhs(inputs.d, inputs.mass, inputs.coupling, inputs.beta, quad)?;
    let floor = single_site_variance.value - integral;
    let inst = format!("d = {}, beta = {}", inputs.d, inputs.beta);
    let error = order_parameter.error.hypot(single_site_variance.error);
    let mut bound = InequalityReport::monte_carlo("infrared", &inst, order_parameter.value, floor, error);
    if floor + MC_SIGMAS * single_site_variance.error <= 0.0 {
        bound.vacuous = true;
        bound.passed = true;
    }
    let variance = InequalityReport::monte_carlo(
        "variance-above-t-star",
        &inst,
        single_site_variance.value,
        inputs.t_star,
        single_site_variance.error,
    );
    Ok(vec![bound, variance])
}

/// A named exact instance.
#[derive(Clone, Debug)]
pub struct Instance {
    pub name: String,
    pub action: DiscreteAction,
    pub quad: QuadratureScheme,
}

fn line_instance(name: &str, sites: usize, p: usize, coeffs: Vec<f64>, h: f64, j: f64, beta: f64) -> Result<Instance> {
    let spec = ModelSpec::uniform(1, 1.0, 1.0, beta, Potential::new(coeffs, h), DynamicalMatrix::NearestNeighbor { j });
    let action = build_action(&spec, &LatticeBox::line(sites, Boundary::Zero)?, p)?;
    let q = match sites {
        1 => 32,
        2 => 20,
        _ => 11,
    };
    let quad = QuadratureScheme::trapezoid_for(&action, q)?;
    Ok(Instance { name: name.into(), action, quad })
}

/// Twelve small instances with 1 to 3 sites, `P` in `{2, 3, 4}` and
/// quartic or sextic potentials; half of them carry a positive field.
pub fn canonical_instances() -> Result<Vec<Instance>> {
    let quartic = vec![-0.5, 0.25];
    let deep = vec![-1.5, 0.25];
    let sextic = vec![0.0, 0.1, 0.05];
    let sextic_well = vec![-1.0, 0.2, 0.05];
    let table: [(&str, usize, usize, &Vec<f64>, f64, f64, f64); 12] = [
        ("quartic-1x2", 1, 2, &quartic, 0.0, 0.0, 1.0),
        ("quartic-1x4-field", 1, 4, &quartic, 0.3, 0.0, 2.0),
        ("sextic-1x3", 1, 3, &sextic, 0.0, 0.0, 1.5),
        ("well-1x4", 1, 4, &deep, 0.1, 0.0, 3.0),
        ("quartic-2x2", 2, 2, &quartic, 0.0, 0.5, 1.0),
        ("quartic-2x3-field", 2, 3, &quartic, 0.2, 0.4, 1.0),
        ("sextic-2x3", 2, 3, &sextic, 0.0, 0.8, 2.0),
        ("well-2x4", 2, 4, &deep, 0.0, 0.6, 2.0),
        ("sextic-well-2x2-field", 2, 2, &sextic_well, 0.5, 1.0, 1.5),
        ("quartic-3x2", 3, 2, &quartic, 0.0, 0.3, 1.0),
        ("sextic-3x3-field", 3, 3, &sextic, 0.1, 0.5, 1.0),
        ("well-3x2", 3, 2, &deep, 0.0, 0.7, 2.0),
    ];
    table
        .iter()
        .map(|&(name, n, p, c, h, j, beta)| line_instance(name, n, p, c.clone(), h, j, beta))
        .collect()
}

/// The checks run on every instance: FKG, GKS and (with the field
/// removed) Gaussian domination and the Ursell sign.
pub fn check_instance(inst: &Instance) -> Result<Vec<InequalityReport>> {
    let a = &inst.action;
    let last = a.n_sites() - 1;
    let tail = a.p - 1;
    let f = Polynomial::total(a);
    let g = Polynomial::monomial(&[(0, 0), (0, 0), (0, 0)]).plus(&Polynomial::linear(&[(last, tail)]));
    let mut out = vec![verify_fkg(a, &f, &g, &inst.quad)?];
    out.extend(verify_gks(a, &[(0, 0)], &[(last, tail), (0, tail)], &inst.quad)?);
    out.extend(verify_gks(a, &[(0, 0), (0, 0)], &[(last, 0), (last, 0)], &inst.quad)?);
    let even = a.with_uniform_field(0.0);
    let even_quad = QuadratureScheme::trapezoid(inst.quad.len(), *inst.quad.nodes.last().unwrap())?;
    out.extend(verify_lebowitz(&even, &[(0, 0), (0, tail), (last, 0), (last, tail)], &even_quad)?);
    out.extend(verify_lebowitz(&even, &[(0, 0), (0, 0), (last, tail), (last, tail), (0, tail), (last, 0)], &even_quad)?);
    for r in &mut out {
        r.instance = format!("{}: {}", inst.name, r.instance);
    }
    Ok(out)
}

/// A random admissible instance: 1 or 2 sites, `P` in `{2, 3}`, even
/// quartic or sextic part with convex `v`, nonnegative field and coupling.
pub fn random_instance(rng: &mut impl Rng) -> Result<Instance> {
    let sites = rng.random_range(1..=2);
    let p = rng.random_range(2..=3);
    let b1 = rng.random_range(-1.5..0.5);
    let mut coeffs = vec![b1, rng.random_range(0.05..0.5)];
    if rng.random::<bool>() {
        coeffs.push(rng.random_range(0.0..0.1));
    }
    let h = if rng.random::<bool>() { rng.random_range(0.0..0.5) } else { 0.0 };
    let j = if sites > 1 { rng.random_range(0.0..1.0) } else { 0.0 };
    let beta = rng.random_range(0.5..3.0);
    let spec = ModelSpec::uniform(1, rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), beta, Potential::new(coeffs, h), DynamicalMatrix::NearestNeighbor { j });
    let action = build_action(&spec, &LatticeBox::line(sites, Boundary::Zero)?, p)?;
    let quad = QuadratureScheme::trapezoid_for(&action, if sites == 1 { 24 } else { 14 })?;
    Ok(Instance { name: "random".into(), action, quad })
}

/// Aggregate of many reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SuiteReport {
    pub name: String,
    pub total: usize,
    pub failures: usize,
    pub worst_margin: f64,
    pub reports: Vec<InequalityReport>,
}

impl SuiteReport {
    pub fn new(name: &str, reports: Vec<InequalityReport>) -> Self {
        Self {
            name: name.into(),
            total: reports.len(),
            failures: reports.iter().filter(|r| !r.passed).count(),
            worst_margin: reports.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min),
            reports,
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

pub fn run_canonical_suite() -> Result<SuiteReport> {
    let mut reports = Vec::new();
    for inst in canonical_instances()? {
        reports.extend(check_instance(&inst)?);
    }
    Ok(SuiteReport::new("canonical", reports))
}

pub fn run_random_suite(seed: u64, count: usize) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::new();
    for k in 0..count {
        let inst = Instance { name: format!("random-{k}"), ..random_instance(&mut rng)? };
        reports.extend(check_instance(&inst)?);
    }
    Ok(SuiteReport::new("random", reports))
}

/// One harmonic site: the four-point moment equals its Wick sum.
pub fn harmonic_wick_instance() -> Result<Instance> {
    let spec = ModelSpec::uniform(1, 1.0, 1.0, 1.0, Potential::zero(), DynamicalMatrix::NearestNeighbor { j: 0.0 });
    let action = build_action(&spec, &LatticeBox::line(1, Boundary::Zero)?, 4)?;
    let quad = QuadratureScheme::trapezoid(96, 9.0)?;
    Ok(Instance { name: "harmonic".into(), action, quad })
}

/// Two antiferromagnetically coupled sites; FKG with `f = x_{0,0}` and
/// `g = x_{1,0}` must fail when the precondition is bypassed.
pub fn antiferromagnetic_meta_test() -> Result<InequalityReport> {
    let spec = ModelSpec::uniform(1, 1.0, 1.0, 1.0, Potential::new(vec![0.0, 0.25], 0.0), DynamicalMatrix::NearestNeighbor { j: -0.8 });
    let action = build_action(&spec, &LatticeBox::line(2, Boundary::Zero)?, 2)?;
    let quad = QuadratureScheme::trapezoid_for(&action, 20)?;
    verify_fkg_unchecked(&action, &Polynomial::monomial(&[(0, 0)]), &Polynomial::monomial(&[(1, 0)]), &quad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairing_counts() {
        assert_eq!(pairings(2).len(), 1);
        assert_eq!(pairings(4).len(), 3);
        assert_eq!(pairings(6).len(), 15);
        assert_eq!(pairings(8).len(), 105);
        assert!(pairings(3).is_empty());
    }

    #[test]
    fn constant_f_has_zero_margin() {
        let inst = line_instance("c", 2, 2, vec![0.0, 0.25], 0.0, 0.5, 1.0).unwrap();
        let r = verify_fkg(&inst.action, &Polynomial::constant(2.0), &Polynomial::total(&inst.action), &inst.quad).unwrap();
        assert!(r.margin.abs() < 1e-12 && r.passed);
    }

    #[test]
    fn preconditions_refuse() {
        let inst = line_instance("af", 2, 2, vec![0.0, 0.25], 0.0, -0.5, 1.0).unwrap();
        let f = Polynomial::total(&inst.action);
        assert!(matches!(verify_fkg(&inst.action, &f, &f, &inst.quad), Err(Error::Precondition(_))));
        let inst = line_instance("ok", 2, 2, vec![0.0, 0.25], 0.0, 0.5, 1.0).unwrap();
        let square = Polynomial::monomial(&[(0, 0), (0, 0)]);
        assert!(matches!(verify_fkg(&inst.action, &square, &f, &inst.quad), Err(Error::Precondition(_))));
        let neg = line_instance("neg", 1, 2, vec![0.0, 0.25], -0.1, 0.0, 1.0).unwrap();
        assert!(verify_gks(&neg.action, &[(0, 0)], &[(0, 1)], &neg.quad).is_err());
        assert!(verify_lebowitz(&neg.action, &[(0, 0), (0, 1)], &neg.quad).is_err());
        assert!(verify_lebowitz(&inst.action, &[(0, 0)], &inst.quad).is_err());
    }

    #[test]
    fn odd_moment_is_zero_at_zero_field() {
        let inst = line_instance("s", 2, 3, vec![0.0, 0.25], 0.0, 0.5, 1.0).unwrap();
        let r = verify_gks(&inst.action, &[(0, 0)], &[(1, 0), (1, 1)], &inst.quad).unwrap();
        assert!(r[0].lhs.abs() < 1e-12);
        assert!(r.iter().all(|r| r.passed));
    }

    #[test]
    fn two_point_domination_is_equality() {
        let inst = line_instance("s", 2, 2, vec![0.0, 0.25], 0.0, 0.5, 1.0).unwrap();
        let r = verify_lebowitz(&inst.action, &[(0, 0), (1, 1)], &inst.quad).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r[0].margin.abs() < 1e-14);
    }

    #[test]
    fn infrared_vacuous_and_precondition() {
        let m = Measurement { value: 0.1, error: 0.01 };
        let p = Measurement { value: 0.01, error: 0.001 };
        let inputs = InfraredInputs { d: 3, mass: 1.0, coupling: 1.0, beta: 0.1, t_star: 0.05 };
        let r = verify_infrared_sanity(&inputs, &m, &p, &LaplaceQuadrature::default()).unwrap();
        assert!(r[0].vacuous && r[0].passed);
        assert!(r[1].passed);
        let zero = InfraredInputs { coupling: 0.0, ..inputs };
        assert!(verify_infrared_sanity(&zero, &m, &p, &LaplaceQuadrature::default()).is_err());
    }
}
