//! Closed-form criteria: the zone constant `theta_d`, the double-well root
//! `t*`, the inverse temperature `beta*`, and the uniqueness conditions.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::brillouin::{self, Estimate, LaplaceQuadrature};
use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::model::{DynamicalMatrix, ModelSpec, Potential, Potentials};
use crate::spectral::{self, GapReport, SchrodingerProblem};

/// Residual tolerance every returned root is checked against.
pub const ROOT_TOLERANCE: f64 = 1e-8;

/// Root of a scalar equation with its final residual.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Root {
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// `theta_d = (2 pi)^{-d} int dp / sqrt(E(p))`.
pub fn theta_d(d: usize, quad: &LaplaceQuadrature) -> Result<Estimate> {
    brillouin::theta_integral(d, quad)
}

/// `Phi(t) = sum_{s >= 2} (2s)! / (2^{s-1} (s-1)!) b^(s) t^{s-1}`, where
/// `higher[0]` is `b^(2)`.
pub fn phi_series(higher: &[f64], t: f64) -> Result<f64> {
    ensure_finite("t", t)?;
    if t < 0.0 {
        return Err(Error::InvalidParameter(format!("Phi is evaluated at t >= 0, got {t}")));
    }
    let mut total = 0.0;
    for (i, &b) in higher.iter().enumerate() {
        let s = i + 2;
        total += phi_weight(s) * b * t.powi(s as i32 - 1);
    }
    Ok(total)
}

/// `(2s)! / (2^{s-1} (s-1)!)`.
pub fn phi_weight(s: usize) -> f64 {
    let mut w = 1.0;
    for k in s..=2 * s {
        w *= k as f64;
    }
    // (2s)! / (s-1)! = s (s+1) ... (2s)
    w / 2f64.powi(s as i32 - 1)
}

fn phi_derivative(higher: &[f64], t: f64) -> f64 {
    higher
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &b)| {
            let s = i + 2;
            phi_weight(s) * b * (s - 1) as f64 * t.powi(s as i32 - 2)
        })
        .sum()
}

/// Unique positive root of `a + 2 b^(1) + Phi(t) = 0`; `coeffs[0]` is
/// `b^(1)`.
pub fn t_star(a: f64, coeffs: &[f64]) -> Result<Root> {
    ensure_positive("rigidity", a)?;
    if coeffs.is_empty() {
        return Err(Error::Precondition("t* needs b^(1) and at least one higher coefficient".into()));
    }
    for c in coeffs {
        ensure_finite("potential coefficient", *c)?;
    }
    let base = a + 2.0 * coeffs[0];
    if base >= 0.0 {
        return Err(Error::Precondition(format!(
            "t* needs 2 b^(1) < -a, got a + 2 b^(1) = {base}"
        )));
    }
    let higher = &coeffs[1..];
    if higher.iter().any(|&b| b < 0.0) || higher.iter().all(|&b| b == 0.0) {
        return Err(Error::Precondition(
            "t* needs b^(s) >= 0 for s >= 2, not all zero".into(),
        ));
    }
    let f = |t: f64| base + phi_series(higher, t).expect("t >= 0");
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Numeric("no sign change while bracketing t*".into()));
        }
    }
    // Newton steps safeguarded by the bracket.
    let mut t = 0.5 * (lo + hi);
    let mut iterations = 0;
    loop {
        iterations += 1;
        let v = f(t);
        if v > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let slope = phi_derivative(higher, t);
        let newton = t - v / slope;
        let next = if slope > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - t).abs() <= 4.0 * f64::EPSILON * t || iterations >= 200 {
            t = next;
            break;
        }
        t = next;
    }
    let residual = f(t);
    if residual.abs() >= 1e-12 * (1.0 + base.abs()) {
        return Err(Error::Numeric(format!("t* solve left residual {residual:e}")));
    }
    Ok(Root { value: t, residual, iterations })
}

/// Right side of the `beta*` equation:
/// `(2 pi)^{-d} int (8 m J E)^{-1/2} coth(beta sqrt(J E / 2m)) dp`.
/// The same integral is the infrared correction to the order parameter.
pub fn beta_star_rhs(d: usize, m: f64, j: f64, beta: f64, quad: &LaplaceQuadrature) -> Result<f64> {
    ensure_positive("mass", m)?;
    ensure_positive("J", j)?;
    ensure_positive("beta", beta)?;
    let c = beta * (j / (2.0 * m)).sqrt();
    let g = brillouin::coth_integral(d, c, quad)?;
    Ok(g.value / (8.0 * m * j).sqrt())
}

/// `J` above which the phase transition is predicted: `theta_d^2 / (8 m t*^2)`.
pub fn phase_transition_threshold(d: usize, m: f64, t_star: f64, quad: &LaplaceQuadrature) -> Result<f64> {
    ensure_positive("mass", m)?;
    ensure_positive("t*", t_star)?;
    let th = theta_d(d, quad)?.value;
    Ok(th * th / (8.0 * m * t_star * t_star))
}

/// Solve `t* = rhs(beta)` for `beta`; the right side decreases strictly
/// from `+inf` to `theta_d / sqrt(8 m J)`.
pub fn beta_star(d: usize, m: f64, j: f64, t_star: f64, quad: &LaplaceQuadrature) -> Result<Root> {
    if d < 3 {
        return Err(Error::Precondition(format!("beta* is defined for d >= 3, got {d}")));
    }
    ensure_positive("t*", t_star)?;
    ensure_positive("J", j)?;
    let threshold = phase_transition_threshold(d, m, t_star, quad)?;
    if j <= threshold {
        return Err(Error::Precondition(format!(
            "J = {j} does not exceed the threshold {threshold}; the equation has no root"
        )));
    }
    let g = |ln_beta: f64| -> Result<f64> { Ok(beta_star_rhs(d, m, j, ln_beta.exp(), quad)? - t_star) };
    let mut lo = 0.0_f64;
    let mut hi = 0.0_f64;
    while g(lo)? <= 0.0 {
        lo -= 1.0;
        if lo < -700.0 {
            return Err(Error::Numeric("could not bracket beta* from below".into()));
        }
    }
    while g(hi)? > 0.0 {
        hi += 1.0;
        if hi > 700.0 {
            return Err(Error::Numeric("could not bracket beta* from above".into()));
        }
    }
    let (mut glo, mut ghi) = (g(lo)?, g(hi)?);
    let mut iterations = 0;
    // Illinois false position on log beta.
    let mut side = 0i8;
    while hi - lo > 1e-15 * hi.abs().max(1.0) && iterations < 300 {
        iterations += 1;
        let x = (lo * ghi - hi * glo) / (ghi - glo);
        let x = if x > lo && x < hi { x } else { 0.5 * (lo + hi) };
        let gx = g(x)?;
        if gx == 0.0 {
            lo = x;
            hi = x;
            break;
        }
        if gx > 0.0 {
            lo = x;
            glo = gx;
            if side == 1 {
                ghi *= 0.5;
            }
            side = 1;
        } else {
            hi = x;
            ghi = gx;
            if side == -1 {
                glo *= 0.5;
            }
            side = -1;
        }
    }
    let value = (0.5 * (lo + hi)).exp();
    let residual = beta_star_rhs(d, m, j, value, quad)? - t_star;
    if residual.abs() >= ROOT_TOLERANCE {
        return Err(Error::Numeric(format!("beta* solve left residual {residual:e}")));
    }
    Ok(Root { value, residual, iterations })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PhaseTransitionReport {
    pub predicted: bool,
    pub theta_d: f64,
    pub t_star: Root,
    pub threshold: f64,
    pub beta_star: Option<Root>,
}

/// Evaluate `J > theta_d^2 / (8 m t*^2)` and attach `beta*` when it holds.
pub fn check_phase_transition(
    d: usize,
    m: f64,
    j: f64,
    a: f64,
    coeffs: &[f64],
    quad: &LaplaceQuadrature,
) -> Result<PhaseTransitionReport> {
    if d < 3 {
        return Err(Error::Precondition(format!("the phase-transition criterion needs d >= 3, got {d}")));
    }
    ensure_positive("J", j)?;
    let ts = t_star(a, coeffs)?;
    let theta = theta_d(d, quad)?.value;
    let threshold = theta * theta / (8.0 * m * ts.value * ts.value);
    let predicted = j > threshold;
    let beta_star = if predicted { Some(beta_star(d, m, j, ts.value, quad)?) } else { None };
    Ok(PhaseTransitionReport { predicted, theta_d: theta, t_star: ts, threshold, beta_star })
}

/// `m Delta^2 > J_hat_0`.
pub fn check_quantum_stabilization(m: f64, gap: f64, j_hat_zero: f64) -> bool {
    m * gap * gap > j_hat_zero
}

/// Nearest-neighbour form `J < 1 / (8 d m t*^2)`.
pub fn check_nn_stabilization(d: usize, m: f64, j: f64, t_star: f64) -> bool {
    j < 1.0 / (8.0 * d as f64 * m * t_star * t_star)
}

/// Splitting `V = V_1 + V_2` with `V_1'' >= b` and `osc V_2 = delta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DecompositionSpec {
    pub b: f64,
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct HighTemperatureReport {
    pub unique: bool,
    /// Present when `delta = 0`: whether uniqueness holds at every beta.
    pub all_beta: Option<bool>,
}

/// `J_hat_0 e^{beta delta} < a + b`.
pub fn check_high_t_uniqueness(
    a: f64,
    decomposition: &DecompositionSpec,
    beta: f64,
    j_hat_zero: f64,
) -> Result<HighTemperatureReport> {
    ensure_positive("rigidity", a)?;
    ensure_positive("beta", beta)?;
    ensure_finite("b", decomposition.b)?;
    if decomposition.b < -a {
        return Err(Error::InvalidParameter(format!(
            "decomposition needs b >= -a, got b = {}",
            decomposition.b
        )));
    }
    if decomposition.delta.is_nan() || decomposition.delta < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "decomposition needs delta >= 0, got {}",
            decomposition.delta
        )));
    }
    if j_hat_zero.is_nan() || j_hat_zero < 0.0 {
        return Err(Error::InvalidParameter(format!("J_hat_0 must be >= 0, got {j_hat_zero}")));
    }
    let rigidity = a + decomposition.b;
    let unique = if decomposition.delta == 0.0 {
        j_hat_zero < rigidity
    } else {
        j_hat_zero * (beta * decomposition.delta).exp() < rigidity
    };
    let all_beta = (decomposition.delta == 0.0).then_some(j_hat_zero < rigidity);
    Ok(HighTemperatureReport { unique, all_beta })
}

/// Everything the `criteria` command reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CriterionReport {
    pub theta_d: Option<f64>,
    pub t_star: Option<Root>,
    pub beta_star: Option<Root>,
    pub phase_transition_threshold: Option<f64>,
    pub delta_gap: Option<GapReport>,
    pub j_hat_zero: f64,
    pub phase_transition_predicted: bool,
    pub quantum_stabilization: Option<bool>,
    pub nn_stabilization: Option<bool>,
    /// `Delta < 1 / (2 m t*)`, reported but never enforced.
    pub gap_below_double_well_bound: Option<bool>,
    pub high_t_unique: Option<bool>,
    pub high_t_all_beta: Option<bool>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CriteriaOptions {
    pub quadrature: LaplaceQuadrature,
    pub grid_points: usize,
    pub n_keep: usize,
}

impl Default for CriteriaOptions {
    fn default() -> Self {
        Self { quadrature: LaplaceQuadrature::default(), grid_points: 200, n_keep: 64 }
    }
}

fn shared_potential(spec: &ModelSpec) -> Result<&Potential> {
    match &spec.potentials {
        Potentials::Uniform(p) => Ok(p),
        Potentials::SiteDependent { default, overrides } if overrides.is_empty() => Ok(default),
        _ => Err(Error::Precondition("criteria need one potential shared by all sites".into())),
    }
}

/// Evaluate every criterion that applies to a translation-invariant model.
pub fn evaluate_criteria(
    spec: &ModelSpec,
    decomposition: Option<&DecompositionSpec>,
    opts: &CriteriaOptions,
) -> Result<CriterionReport> {
    spec.check_well_formed()?;
    let pot = shared_potential(spec)?;
    let quad = &opts.quadrature;
    let mut notes = Vec::new();
    let j_hat_zero = spec.j_hat_zero()?;
    let (m, a, d) = (spec.mass, spec.rigidity, spec.d);

    let theta = if d >= 2 { Some(theta_d(d, quad)?.value) } else { None };

    let t_star_root = match t_star(a, &pot.even_coeffs) {
        Ok(r) => Some(r),
        Err(Error::Precondition(msg)) => {
            notes.push(format!("t* not defined: {msg}"));
            None
        }
        Err(e) => return Err(e),
    };

    let nn_j = match &spec.couplings {
        DynamicalMatrix::NearestNeighbor { j } => Some(*j),
        _ => None,
    };

    let mut predicted = false;
    let mut beta_star_root = None;
    let mut threshold = None;
    match (t_star_root, nn_j, theta) {
        (Some(ts), Some(j), Some(th)) if d >= 3 && j > 0.0 && pot.is_even() => {
            let thr = th * th / (8.0 * m * ts.value * ts.value);
            threshold = Some(thr);
            if j > thr {
                predicted = true;
                beta_star_root = Some(beta_star(d, m, j, ts.value, quad)?);
            }
        }
        _ => notes.push(
            "phase-transition criterion needs d >= 3, nearest-neighbour J > 0, an even double-well potential"
                .into(),
        ),
    }

    let problem = SchrodingerProblem::new(m, a, pot.with_field(0.0))
        .with_grid(opts.grid_points, None)
        .with_n_keep(opts.n_keep);
    let gap = match spectral::solve_schrodinger(&problem).and_then(|dec| spectral::spectral_gap(&dec)) {
        Ok(g) => Some(g),
        Err(e) if e.is_input_error() => {
            notes.push(format!("spectral gap not computed: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    let quantum_stabilization = gap.as_ref().map(|g| check_quantum_stabilization(m, g.gap, j_hat_zero));
    let nn_stabilization = match (nn_j, t_star_root) {
        (Some(j), Some(ts)) => Some(check_nn_stabilization(d, m, j, ts.value)),
        _ => None,
    };
    let gap_bound = match (&gap, t_star_root) {
        (Some(g), Some(ts)) => Some(g.gap < 1.0 / (2.0 * m * ts.value)),
        _ => None,
    };

    let (high_t_unique, high_t_all_beta) = match decomposition {
        Some(dec) => {
            let r = check_high_t_uniqueness(a, dec, spec.beta, j_hat_zero)?;
            (Some(r.unique), r.all_beta)
        }
        None => (None, None),
    };

    Ok(CriterionReport {
        theta_d: theta,
        t_star: t_star_root,
        beta_star: beta_star_root,
        phase_transition_threshold: threshold,
        delta_gap: gap,
        j_hat_zero,
        phase_transition_predicted: predicted,
        quantum_stabilization,
        nn_stabilization,
        gap_below_double_well_bound: gap_bound,
        high_t_unique,
        high_t_all_beta,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_weights() {
        assert_eq!(phi_weight(2), 12.0);
        assert_eq!(phi_weight(3), 90.0);
        assert_eq!(phi_series(&[2.0], 0.0).unwrap(), 0.0);
        assert!((phi_series(&[1.0, 1.0], 0.5).unwrap() - (6.0 + 22.5)).abs() < 1e-14);
        assert!(phi_series(&[1.0], -1.0).is_err());
    }

    #[test]
    fn quartic_t_star_closed_form() {
        let r = t_star(1.0, &[-1.0, 1.0]).unwrap();
        assert!((r.value - 1.0 / 12.0).abs() < 1e-15);
        for &(a, b1, b2) in &[(1.0, -2.0, 0.3), (0.5, -7.0, 4.0), (2.0, -1.5, 1e-3)] {
            let r = t_star(a, &[b1, b2]).unwrap();
            let exact = -(a + 2.0 * b1) / (12.0 * b2);
            assert!((r.value - exact).abs() <= 1e-12 * exact);
        }
    }

    #[test]
    fn sextic_t_star_quadratic_formula() {
        // a + 2 b1 = -1, b2 = b3 = 1: 90 t^2 + 12 t - 1 = 0.
        let r = t_star(1.0, &[-1.0, 1.0, 1.0]).unwrap();
        let exact = (-12.0 + (144.0f64 + 360.0).sqrt()) / 180.0;
        assert!((r.value - exact).abs() < 1e-14);
        assert!(r.residual.abs() < 1e-12);
    }

    #[test]
    fn t_star_preconditions() {
        assert!(matches!(t_star(1.0, &[0.0, 1.0]), Err(Error::Precondition(_))));
        assert!(matches!(t_star(1.0, &[-1.0, -1.0]), Err(Error::Precondition(_))));
        assert!(matches!(t_star(1.0, &[-1.0, 0.0]), Err(Error::Precondition(_))));
    }

    #[test]
    fn theta_exceeds_inverse_dimension() {
        let q = LaplaceQuadrature::default();
        let mut prev = f64::INFINITY;
        for d in 3..=10 {
            let th = theta_d(d, &q).unwrap().value;
            assert!(th > 1.0 / d as f64);
            let s = d as f64 * th * th;
            assert!(s > 1.0 && s < 3.0 && s < prev, "d={d} {s}");
            prev = s;
        }
    }

    #[test]
    fn beta_star_root_and_monotonicity() {
        let q = LaplaceQuadrature::default();
        let ts = 1.0 / 12.0;
        let thr = phase_transition_threshold(3, 1.0, ts, &q).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..3 {
            let j = 2.0 * thr * 2f64.powi(k);
            let b = beta_star(3, 1.0, j, ts, &q).unwrap();
            assert!(b.residual.abs() < 1e-10);
            assert!(b.value < prev);
            prev = b.value;
        }
        assert!(beta_star(3, 1.0, 0.9 * thr, ts, &q).is_err());
        let mut last = f64::INFINITY;
        for beta in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let r = beta_star_rhs(3, 1.0, 1.0, beta, &q).unwrap();
            assert!(r < last);
            last = r;
        }
    }

    #[test]
    fn phase_transition_check() {
        let q = LaplaceQuadrature::default();
        let thr = phase_transition_threshold(3, 1.0, 1.0 / 12.0, &q).unwrap();
        let below = check_phase_transition(3, 1.0, 0.5 * thr, 1.0, &[-1.0, 1.0], &q).unwrap();
        assert!(!below.predicted && below.beta_star.is_none());
        let above = check_phase_transition(3, 1.0, 2.0 * thr, 1.0, &[-1.0, 1.0], &q).unwrap();
        assert!(above.predicted && above.beta_star.is_some());
        assert!(check_phase_transition(2, 1.0, 1.0, 1.0, &[-1.0, 1.0], &q).is_err());
    }

    #[test]
    fn stabilization_strictness() {
        assert!(check_quantum_stabilization(1.0, 1.0, 0.5));
        assert!(!check_quantum_stabilization(1.0, 1.0, 1.0));
    }

    #[test]
    fn high_temperature_rule() {
        let dec = DecompositionSpec { b: 0.5, delta: 0.0 };
        assert!(check_high_t_uniqueness(1.0, &dec, 100.0, 1.4).unwrap().unique);
        let r = check_high_t_uniqueness(1.0, &dec, 1.0, 1.5).unwrap();
        assert!(!r.unique && r.all_beta == Some(false));
        let dec = DecompositionSpec { b: 0.0, delta: 2.0 };
        let bound = (1.0f64 / 0.5).ln() / 2.0;
        assert!(check_high_t_uniqueness(1.0, &dec, 0.9 * bound, 0.5).unwrap().unique);
        assert!(!check_high_t_uniqueness(1.0, &dec, 1.1 * bound, 0.5).unwrap().unique);
        assert!(check_high_t_uniqueness(1.0, &DecompositionSpec { b: -2.0, delta: 0.0 }, 1.0, 0.1).is_err());
    }
}
