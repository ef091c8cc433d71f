//! Crystal model: parameters, self-interaction potentials, the dynamical
//! matrix, decay weights and the interaction norms built from them.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::gauss;

/// A lattice site in Z^d.
pub type Site = Vec<i64>;

/// Euclidean distance between two sites.
pub fn distance(a: &[i64], b: &[i64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| ((x - y) as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Polynomial self-interaction `V(x) = sum_s b_s |x|^{2s} - h x`.
///
/// `even_coeffs[s - 1]` holds `b^(s)`; there is no constant term, so
/// `V(0) = 0` always holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Potential {
    pub even_coeffs: Vec<f64>,
    #[serde(default)]
    pub field: f64,
}

impl Potential {
    pub fn new(even_coeffs: Vec<f64>, field: f64) -> Self {
        Self { even_coeffs, field }
    }

    /// `V = 0`, the harmonic crystal.
    pub fn zero() -> Self {
        Self::new(Vec::new(), 0.0)
    }

    /// Highest power `r` with a nonzero coefficient of `|x|^{2r}`.
    pub fn degree(&self) -> usize {
        self.even_coeffs
            .iter()
            .rposition(|&c| c != 0.0)
            .map_or(0, |i| i + 1)
    }

    pub fn leading_coeff(&self) -> f64 {
        match self.degree() {
            0 => 0.0,
            r => self.even_coeffs[r - 1],
        }
    }

    pub fn coeff(&self, s: usize) -> f64 {
        if s == 0 {
            return 0.0;
        }
        self.even_coeffs.get(s - 1).copied().unwrap_or(0.0)
    }

    pub fn is_even(&self) -> bool {
        self.field == 0.0
    }

    pub fn with_field(&self, field: f64) -> Self {
        Self::new(self.even_coeffs.clone(), field)
    }

    /// Even part as a polynomial in `t = x^2`.
    pub fn even_value_at_t(&self, t: f64) -> f64 {
        self.even_coeffs.iter().rev().fold(0.0, |acc, &c| (acc + c) * t)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.even_value_at_t(x * x) - self.field * x
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let t = x * x;
        let mut acc = 0.0;
        for (i, &c) in self.even_coeffs.iter().enumerate().rev() {
            let s = (i + 1) as f64;
            acc = acc * t + 2.0 * s * c;
        }
        acc * x - self.field
    }

    /// True when the even part `v(t)` has a nonnegative second derivative
    /// on `t >= 0`, checked coefficient-wise (`b^(s) >= 0` for `s >= 2`).
    pub fn even_part_convex_in_t(&self) -> bool {
        self.even_coeffs.iter().skip(1).all(|&c| c >= 0.0)
    }

    fn check_finite(&self) -> Result<()> {
        for (i, c) in self.even_coeffs.iter().enumerate() {
            ensure_finite(&format!("potential coefficient b^({})", i + 1), *c)?;
        }
        ensure_finite("external field", self.field)
    }
}

/// Per-site potentials: one shared potential, or a default plus finitely
/// many site overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Potentials {
    Uniform(Potential),
    SiteDependent {
        default: Potential,
        overrides: BTreeMap<String, Potential>,
    },
}

impl Potentials {
    pub fn at(&self, site: &[i64]) -> &Potential {
        match self {
            Potentials::Uniform(p) => p,
            Potentials::SiteDependent { default, overrides } => {
                overrides.get(&site_key(site)).unwrap_or(default)
            }
        }
    }

    pub fn distinct(&self) -> Vec<&Potential> {
        match self {
            Potentials::Uniform(p) => vec![p],
            Potentials::SiteDependent { default, overrides } => {
                std::iter::once(default).chain(overrides.values()).collect()
            }
        }
    }

    pub fn is_translation_invariant(&self) -> bool {
        match self {
            Potentials::Uniform(_) => true,
            Potentials::SiteDependent { overrides, .. } => overrides.is_empty(),
        }
    }
}

/// Key used for site overrides, e.g. `"0,1,-2"`.
pub fn site_key(site: &[i64]) -> String {
    site.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

pub fn parse_site_key(key: &str) -> Result<Site> {
    key.split(',')
        .map(|s| {
            s.trim()
                .parse::<i64>()
                .map_err(|_| Error::Config(format!("bad site key {key:?}")))
        })
        .collect()
}

/// One translation-invariant entry `J(offset)` of a finite-range matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CouplingEntry {
    pub offset: Vec<i64>,
    pub value: f64,
}

/// The dynamical matrix `J_{ll'}`, translation invariant in every variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DynamicalMatrix {
    NearestNeighbor { j: f64 },
    FiniteRange { entries: Vec<CouplingEntry> },
    ExponentialDecay { j: f64, rate: f64 },
    PolynomialDecay { j: f64, gamma: f64 },
}

impl DynamicalMatrix {
    /// `J_{ll'}` as a function of the offset `l' - l`.
    pub fn at_offset(&self, offset: &[i64]) -> f64 {
        let r2: i64 = offset.iter().map(|c| c * c).sum();
        match self {
            DynamicalMatrix::NearestNeighbor { j } => {
                if r2 == 1 {
                    *j
                } else {
                    0.0
                }
            }
            DynamicalMatrix::FiniteRange { entries } => entries
                .iter()
                .filter(|e| e.offset.as_slice() == offset)
                .map(|e| e.value)
                .sum(),
            DynamicalMatrix::ExponentialDecay { j, rate } => {
                if r2 == 0 {
                    0.0
                } else {
                    j * (-rate * (r2 as f64).sqrt()).exp()
                }
            }
            DynamicalMatrix::PolynomialDecay { j, gamma } => {
                if r2 == 0 {
                    0.0
                } else {
                    let d = offset.len() as f64;
                    j * (1.0 + (r2 as f64).sqrt()).powf(-d - gamma)
                }
            }
        }
    }

    pub fn entry(&self, l: &[i64], lp: &[i64]) -> f64 {
        let offset: Vec<i64> = lp.iter().zip(l).map(|(a, b)| a - b).collect();
        self.at_offset(&offset)
    }

    /// Interaction range `R` for finite-range variants.
    pub fn range(&self) -> Option<f64> {
        match self {
            DynamicalMatrix::NearestNeighbor { .. } => Some(1.0),
            DynamicalMatrix::FiniteRange { entries } => Some(
                entries
                    .iter()
                    .filter(|e| e.value != 0.0)
                    .map(|e| e.offset.iter().map(|c| (c * c) as f64).sum::<f64>().sqrt())
                    .fold(0.0, f64::max),
            ),
            _ => None,
        }
    }

    pub fn is_ferromagnetic(&self) -> bool {
        match self {
            DynamicalMatrix::NearestNeighbor { j }
            | DynamicalMatrix::ExponentialDecay { j, .. }
            | DynamicalMatrix::PolynomialDecay { j, .. } => *j >= 0.0,
            DynamicalMatrix::FiniteRange { entries } => entries.iter().all(|e| e.value >= 0.0),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            DynamicalMatrix::NearestNeighbor { j }
            | DynamicalMatrix::ExponentialDecay { j, .. }
            | DynamicalMatrix::PolynomialDecay { j, .. } => *j == 0.0,
            DynamicalMatrix::FiniteRange { entries } => entries.iter().all(|e| e.value == 0.0),
        }
    }

    /// Nonzero offsets of a finite-range matrix (empty for infinite range).
    pub fn finite_offsets(&self, d: usize) -> Option<Vec<(Vec<i64>, f64)>> {
        match self {
            DynamicalMatrix::NearestNeighbor { j } => {
                let mut out = Vec::with_capacity(2 * d);
                for axis in 0..d {
                    for sign in [-1, 1] {
                        let mut o = vec![0; d];
                        o[axis] = sign;
                        out.push((o, *j));
                    }
                }
                Some(out)
            }
            DynamicalMatrix::FiniteRange { entries } => {
                let mut merged: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
                for e in entries {
                    *merged.entry(e.offset.clone()).or_default() += e.value;
                }
                Some(merged.into_iter().filter(|(_, v)| *v != 0.0).collect())
            }
            _ => None,
        }
    }

    fn check_finite(&self) -> Result<()> {
        match self {
            DynamicalMatrix::NearestNeighbor { j } => ensure_finite("J", *j),
            DynamicalMatrix::FiniteRange { entries } => {
                entries.iter().try_for_each(|e| ensure_finite("J entry", e.value))
            }
            DynamicalMatrix::ExponentialDecay { j, rate } => {
                ensure_finite("J", *j)?;
                ensure_finite("decay rate", *rate)
            }
            DynamicalMatrix::PolynomialDecay { j, gamma } => {
                ensure_finite("J", *j)?;
                ensure_finite("decay exponent", *gamma)
            }
        }
    }
}

/// Full crystal definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ModelSpec {
    pub d: usize,
    pub nu: usize,
    pub mass: f64,
    pub rigidity: f64,
    pub beta: f64,
    pub potentials: Potentials,
    pub couplings: DynamicalMatrix,
}

impl ModelSpec {
    /// Translation-invariant scalar model with a shared potential.
    pub fn uniform(
        d: usize,
        mass: f64,
        rigidity: f64,
        beta: f64,
        potential: Potential,
        couplings: DynamicalMatrix,
    ) -> Self {
        Self {
            d,
            nu: 1,
            mass,
            rigidity,
            beta,
            potentials: Potentials::Uniform(potential),
            couplings,
        }
    }

    /// Structural checks that make a spec unusable (as opposed to failing
    /// the standing assumptions, which `validate_model` reports).
    pub fn check_well_formed(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidParameter("lattice dimension d must be >= 1".into()));
        }
        if self.nu == 0 {
            return Err(Error::InvalidParameter("loop dimension nu must be >= 1".into()));
        }
        ensure_positive("mass", self.mass)?;
        ensure_positive("rigidity", self.rigidity)?;
        ensure_positive("beta", self.beta)?;
        for p in self.potentials.distinct() {
            p.check_finite()?;
        }
        if let Potentials::SiteDependent { overrides, .. } = &self.potentials {
            for key in overrides.keys() {
                let site = parse_site_key(key)?;
                if site.len() != self.d {
                    return Err(Error::InvalidParameter(format!(
                        "override site {key} has dimension {} but d = {}",
                        site.len(),
                        self.d
                    )));
                }
            }
        }
        if let DynamicalMatrix::FiniteRange { entries } = &self.couplings {
            if let Some(e) = entries.iter().find(|e| e.offset.len() != self.d) {
                return Err(Error::InvalidParameter(format!(
                    "coupling offset {:?} does not have dimension {}",
                    e.offset, self.d
                )));
            }
        }
        self.couplings.check_finite()
    }

    pub fn j_hat_zero(&self) -> Result<f64> {
        Ok(interaction_sum(self.d, &self.couplings, None)?.value)
    }
}

/// Lower bound `A_V |x|^{2r} + B_V <= V_l(x)` shared by all sites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LowerBound {
    pub a_v: f64,
    pub b_v: f64,
    pub r: usize,
}

/// Shared upper bound `V(x) = sum_s c_s |x|^{2s} + k |x|` with `V(0) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct UpperBound {
    pub even_coeffs: Vec<f64>,
    pub abs_linear: f64,
}

impl UpperBound {
    pub fn eval(&self, rho: f64) -> f64 {
        let t = rho * rho;
        self.even_coeffs.iter().rev().fold(0.0, |acc, &c| (acc + c) * t) + self.abs_linear * rho
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ValidationReport {
    pub passes: bool,
    pub derived_lower_bound: Option<LowerBound>,
    pub derived_upper_bound: Option<UpperBound>,
    pub j_hat_zero: f64,
    pub diagnostics: Vec<String>,
}

/// Check the standing assumptions on the potentials and the dynamical
/// matrix, deriving the polynomial bounds constructively.
pub fn validate_model(spec: &ModelSpec) -> Result<ValidationReport> {
    spec.check_well_formed()?;
    let mut diagnostics = Vec::new();

    let potentials = spec.potentials.distinct();
    let lower = derive_lower_bound(&potentials, &mut diagnostics);
    let upper = derive_upper_bound(&potentials);

    let d = spec.d;
    let couplings = &spec.couplings;
    if couplings.at_offset(&vec![0; d]) != 0.0 {
        diagnostics.push(format!(
            "dynamical matrix has nonzero diagonal J_ll = {}",
            couplings.at_offset(&vec![0; d])
        ));
    }
    if let Some(offsets) = couplings.finite_offsets(d) {
        for (o, v) in &offsets {
            let neg: Vec<i64> = o.iter().map(|c| -c).collect();
            let back = couplings.at_offset(&neg);
            if (back - v).abs() > 0.0 {
                diagnostics.push(format!(
                    "dynamical matrix is not symmetric: J({o:?}) = {v} but J({neg:?}) = {back}"
                ));
            }
        }
    }
    match couplings {
        DynamicalMatrix::ExponentialDecay { rate, j } if *rate <= 0.0 && *j != 0.0 => {
            diagnostics.push(format!("exponential decay rate {rate} must be positive"));
        }
        DynamicalMatrix::PolynomialDecay { gamma, j } if *gamma <= 0.0 && *j != 0.0 => {
            diagnostics.push(format!(
                "polynomial decay exponent gamma = {gamma} must be positive for a finite J_hat_0"
            ));
        }
        _ => {}
    }

    let j_hat_zero = match interaction_sum(d, couplings, None) {
        Ok(s) => s.value,
        Err(Error::Divergent(msg)) => {
            diagnostics.push(format!("J_hat_0 is infinite: {msg}"));
            f64::INFINITY
        }
        Err(e) => return Err(e),
    };

    Ok(ValidationReport {
        passes: diagnostics.is_empty(),
        derived_lower_bound: lower,
        derived_upper_bound: Some(upper),
        j_hat_zero,
        diagnostics,
    })
}

fn derive_lower_bound(potentials: &[&Potential], diagnostics: &mut Vec<String>) -> Option<LowerBound> {
    let mut ok = true;
    for p in potentials {
        let r = p.degree();
        if r < 2 {
            diagnostics.push(format!(
                "potential {:?} has degree r = {r}; the lower bound A_V|x|^(2r) + B_V needs r > 1",
                p.even_coeffs
            ));
            ok = false;
        } else if p.leading_coeff() <= 0.0 {
            diagnostics.push(format!(
                "potential {:?} has non-positive leading coefficient, V is not bounded below",
                p.even_coeffs
            ));
            ok = false;
        }
    }
    if !ok {
        return None;
    }
    let r = potentials.iter().map(|p| p.degree()).min().unwrap_or(0);
    let a_v = potentials
        .iter()
        .filter(|p| p.degree() == r)
        .map(|p| 0.5 * p.leading_coeff())
        .fold(f64::INFINITY, f64::min);

    let mut b_v: f64 = 0.0;
    for p in potentials {
        // g(rho) = V_low(rho) - a_v rho^{2r} as a polynomial in rho >= 0,
        // where V_low replaces -h x by -|h| rho.
        let deg = 2 * p.degree();
        let mut g = vec![0.0; deg + 1];
        for s in 1..=p.degree() {
            g[2 * s] = p.coeff(s);
        }
        g[1] -= p.field.abs();
        g[2 * r] -= a_v;
        b_v = b_v.min(polynomial_lower_bound(&g));
    }
    Some(LowerBound { a_v, b_v, r })
}

/// Rigorous lower bound of a polynomial (ascending coefficients, positive
/// leading coefficient) on `[0, inf)`: beyond a Cauchy radius the leading
/// term dominates, inside it a cell-wise interval bound is taken.
fn polynomial_lower_bound(c: &[f64]) -> f64 {
    let n = c.len() - 1;
    let lead = c[n];
    let tail: f64 = c[..n].iter().map(|x| x.abs()).sum();
    let radius = (tail / lead).max(1.0);
    let cells = 4096;
    let h = radius / cells as f64;
    let mut lowest = 0.0_f64;
    for i in 0..cells {
        let lo = i as f64 * h;
        let hi = lo + h;
        let bound: f64 = c
            .iter()
            .enumerate()
            .map(|(k, &ck)| {
                let x = if ck >= 0.0 { lo } else { hi };
                ck * x.powi(k as i32)
            })
            .sum();
        lowest = lowest.min(bound);
    }
    lowest
}

fn derive_upper_bound(potentials: &[&Potential]) -> UpperBound {
    let r = potentials.iter().map(|p| p.even_coeffs.len()).max().unwrap_or(0);
    let mut even_coeffs = vec![0.0_f64; r];
    for p in potentials {
        for (i, c) in p.even_coeffs.iter().enumerate() {
            even_coeffs[i] = even_coeffs[i].max(*c);
        }
    }
    // Shared coefficients may still be negative at low order; that keeps
    // V_l <= V because every site uses a coefficient no larger than the max.
    let abs_linear = potentials.iter().map(|p| p.field.abs()).fold(0.0, f64::max);
    UpperBound { even_coeffs, abs_linear }
}

/// Weight families for tempered configurations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Exponential,
    Polynomial,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct WeightFamily {
    pub kind: WeightKind,
    pub alpha: f64,
    /// Scale of the polynomial weights; ignored for the exponential kind.
    pub epsilon: f64,
    pub d: usize,
}

impl WeightFamily {
    pub fn exponential(alpha: f64, d: usize) -> Self {
        Self { kind: WeightKind::Exponential, alpha, epsilon: 1.0, d }
    }

    pub fn polynomial(alpha: f64, epsilon: f64, d: usize) -> Self {
        Self { kind: WeightKind::Polynomial, alpha, epsilon, d }
    }

    fn check_alpha(&self) -> Result<()> {
        ensure_finite("alpha", self.alpha)?;
        match self.kind {
            WeightKind::Exponential if self.alpha <= 0.0 => Err(Error::InvalidParameter(format!(
                "exponential weights need alpha > 0, got {}",
                self.alpha
            ))),
            WeightKind::Polynomial if self.alpha <= 1.0 => Err(Error::InvalidParameter(format!(
                "polynomial weights need alpha > 1, got {}",
                self.alpha
            ))),
            WeightKind::Polynomial if self.epsilon <= 0.0 => Err(Error::InvalidParameter(
                format!("polynomial weights need epsilon > 0, got {}", self.epsilon),
            )),
            _ => Ok(()),
        }
    }

    /// Weight as a function of the distance `|l - l'|`.
    pub fn at_distance(&self, r: f64) -> f64 {
        match self.kind {
            WeightKind::Exponential => (-self.alpha * r).exp(),
            WeightKind::Polynomial => (1.0 + self.epsilon * r).powf(-self.alpha * self.d as f64),
        }
    }
}

/// `w_alpha(l, l')` in closed form.
pub fn weight(family: &WeightFamily, site1: &[i64], site2: &[i64]) -> Result<f64> {
    family.check_alpha()?;
    if site1.len() != family.d || site2.len() != family.d {
        return Err(Error::InvalidParameter("site dimension does not match weight family".into()));
    }
    Ok(family.at_distance(distance(site1, site2)))
}

/// Result of a truncated lattice sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LatticeSum {
    pub value: f64,
    /// Upper bound on the omitted tail.
    pub tail_bound: f64,
    /// Euclidean radius of the summed ball.
    pub radius: f64,
    /// Whether the tail bound fell below the requested relative tolerance.
    pub converged: bool,
}

pub const LATTICE_SUM_RTOL: f64 = 1e-12;

/// `J_hat_alpha = sup_l sum_l' |J_{ll'}| / w_alpha(l, l')`; `alpha = 0`
/// returns `J_hat_0`.
pub fn j_hat_alpha(spec: &ModelSpec, family: &WeightFamily) -> Result<LatticeSum> {
    spec.check_well_formed()?;
    if family.d != spec.d {
        return Err(Error::InvalidParameter("weight family dimension differs from model".into()));
    }
    if family.alpha == 0.0 {
        return interaction_sum(spec.d, &spec.couplings, None);
    }
    family.check_alpha()?;
    interaction_sum(spec.d, &spec.couplings, Some(family))
}

fn interaction_sum(
    d: usize,
    couplings: &DynamicalMatrix,
    family: Option<&WeightFamily>,
) -> Result<LatticeSum> {
    let inv_weight = |r: f64| family.map_or(1.0, |f| 1.0 / f.at_distance(r));
    if let Some(offsets) = couplings.finite_offsets(d) {
        let value = offsets
            .iter()
            .map(|(o, v)| v.abs() * inv_weight(o.iter().map(|c| (c * c) as f64).sum::<f64>().sqrt()))
            .sum();
        let radius = couplings.range().unwrap_or(0.0);
        return Ok(LatticeSum { value, tail_bound: 0.0, radius, converged: true });
    }
    let df = d as f64;
    match (couplings, family.map(|f| f.kind)) {
        (DynamicalMatrix::ExponentialDecay { j, .. }, _)
        | (DynamicalMatrix::PolynomialDecay { j, .. }, _)
            if *j == 0.0 =>
        {
            Ok(LatticeSum { value: 0.0, tail_bound: 0.0, radius: 0.0, converged: true })
        }
        (DynamicalMatrix::ExponentialDecay { rate, .. }, Some(WeightKind::Exponential)) => {
            let alpha = family.unwrap().alpha;
            if alpha >= *rate {
                return Err(Error::Divergent(format!(
                    "exponential weights with alpha = {alpha} >= decay rate {rate}"
                )));
            }
            radial_sum(d, |r| couplings_abs(couplings, d, r) * inv_weight(r))
        }
        (DynamicalMatrix::ExponentialDecay { rate, .. }, _) => {
            if *rate <= 0.0 {
                return Err(Error::Divergent(format!("decay rate {rate} is not positive")));
            }
            radial_sum(d, |r| couplings_abs(couplings, d, r) * inv_weight(r))
        }
        (DynamicalMatrix::PolynomialDecay { .. }, Some(WeightKind::Exponential)) => {
            Err(Error::Divergent(
                "polynomially decaying couplings are not summable against exponential weights".into(),
            ))
        }
        (DynamicalMatrix::PolynomialDecay { gamma, .. }, kind) => {
            let growth = match kind {
                Some(WeightKind::Polynomial) => family.unwrap().alpha * df,
                _ => 0.0,
            };
            if *gamma <= growth {
                return Err(Error::Divergent(format!(
                    "polynomial decay exponent gamma = {gamma} does not exceed alpha d = {growth}"
                )));
            }
            radial_sum(d, |r| couplings_abs(couplings, d, r) * inv_weight(r))
        }
        _ => unreachable!("finite-range couplings handled above"),
    }
}

fn couplings_abs(c: &DynamicalMatrix, d: usize, r: f64) -> f64 {
    match c {
        DynamicalMatrix::ExponentialDecay { j, rate } => j.abs() * (-rate * r).exp(),
        DynamicalMatrix::PolynomialDecay { j, gamma } => {
            j.abs() * (1.0 + r).powf(-(d as f64) - gamma)
        }
        _ => unreachable!(),
    }
}

/// Number of points of Z^d with squared norm k, for k <= kmax.
fn representation_counts(d: usize, kmax: usize) -> Vec<f64> {
    let mut one = vec![0.0; kmax + 1];
    one[0] = 1.0;
    let mut s = 1;
    while s * s <= kmax {
        one[s * s] = 2.0;
        s += 1;
    }
    let mut acc = one.clone();
    for _ in 1..d {
        let mut next = vec![0.0; kmax + 1];
        for (k, &a) in acc.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let mut s = 0;
            while k + s * s <= kmax {
                next[k + s * s] += a * one[s * s];
                s += 1;
            }
        }
        acc = next;
    }
    acc
}

/// Sum of a radially decreasing summand over Z^d \ {0}, growing the ball
/// until the tail bound drops below `LATTICE_SUM_RTOL` of the partial sum.
fn radial_sum(d: usize, g: impl Fn(f64) -> f64) -> Result<LatticeSum> {
    let df = d as f64;
    let max_radius = ((3e9 / df).cbrt()).min(4096.0).max(16.0) as usize;
    let surface = 2.0 * PI.powf(df / 2.0) / gamma_fn(df / 2.0);
    let half_diag = df.sqrt() / 2.0;
    let mut radius = 16usize;
    loop {
        let kmax = radius * radius;
        let counts = representation_counts(d, kmax);
        let value: f64 = counts
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, c)| **c > 0.0)
            .map(|(k, c)| c * g((k as f64).sqrt()))
            .sum();
        let start = (radius as f64 - df.sqrt()).max(0.0);
        let tail_bound = surface * tail_integral(|s| (s + half_diag).powf(df - 1.0) * g(s), start);
        let converged = tail_bound <= LATTICE_SUM_RTOL * value.abs().max(f64::MIN_POSITIVE);
        if converged || radius >= max_radius {
            return Ok(LatticeSum { value, tail_bound, radius: radius as f64, converged });
        }
        radius = (radius * 2).min(max_radius);
    }
}

// Integral of a nonnegative, eventually decreasing f over [start, inf) on
// geometrically growing panels.
fn tail_integral(f: impl Fn(f64) -> f64, start: f64) -> f64 {
    let mut lo = start;
    let mut width = start.max(1.0);
    let mut total = 0.0;
    for _ in 0..4000 {
        let hi = lo + width;
        let piece = gauss::integrate_interval(&f, lo, hi, 4, 16);
        total += piece;
        if piece <= 1e-18 * total.max(f64::MIN_POSITIVE) || !total.is_finite() {
            break;
        }
        lo = hi;
        width *= 1.5;
    }
    total
}

/// Gamma function via the Lanczos approximation (g = 7, n = 9).
pub fn gamma_fn(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma_fn(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quartic_nn(d: usize) -> ModelSpec {
        ModelSpec::uniform(
            d,
            1.0,
            1.0,
            1.0,
            Potential::new(vec![-2.0, 1.0], 0.0),
            DynamicalMatrix::NearestNeighbor { j: 1.0 },
        )
    }

    #[test]
    fn quartic_nearest_neighbor_passes_with_completed_square_bound() {
        let report = validate_model(&quartic_nn(2)).unwrap();
        assert!(report.passes, "{:?}", report.diagnostics);
        let lb = report.derived_lower_bound.unwrap();
        assert_eq!(lb.r, 2);
        assert_eq!(lb.a_v, 0.5);
        // x^4/2 - 2x^2 has minimum -2 at x^2 = 2; the interval bound is
        // conservative but tight.
        assert!(lb.b_v <= -2.0 && lb.b_v > -2.05, "b_v = {}", lb.b_v);
        for i in 0..2000 {
            let x = -6.0 + 12.0 * i as f64 / 1999.0;
            let v = x.powi(4) - 2.0 * x * x;
            assert!(lb.a_v * x.powi(4) + lb.b_v <= v + 1e-12);
        }
        assert_eq!(report.j_hat_zero, 4.0);
    }

    #[test]
    fn harmonic_crystal_fails_lower_bound() {
        let mut spec = quartic_nn(2);
        spec.potentials = Potentials::Uniform(Potential::zero());
        let report = validate_model(&spec).unwrap();
        assert!(!report.passes);
        assert!(report.derived_lower_bound.is_none());
        assert!(report.diagnostics[0].contains("r > 1"));
    }

    #[test]
    fn nonzero_diagonal_fails() {
        let mut spec = quartic_nn(1);
        spec.couplings = DynamicalMatrix::FiniteRange {
            entries: vec![
                CouplingEntry { offset: vec![0], value: 1.0 },
                CouplingEntry { offset: vec![1], value: 0.5 },
                CouplingEntry { offset: vec![-1], value: 0.5 },
            ],
        };
        let report = validate_model(&spec).unwrap();
        assert!(!report.passes);
        assert!(report.diagnostics.iter().any(|d| d.contains("diagonal")));
    }

    #[test]
    fn asymmetric_table_fails() {
        let mut spec = quartic_nn(1);
        spec.couplings = DynamicalMatrix::FiniteRange {
            entries: vec![CouplingEntry { offset: vec![1], value: 0.5 }],
        };
        let report = validate_model(&spec).unwrap();
        assert!(report.diagnostics.iter().any(|d| d.contains("symmetric")));
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut spec = quartic_nn(1);
        spec.mass = -1.0;
        assert!(validate_model(&spec).is_err());
        let mut spec = quartic_nn(1);
        spec.potentials = Potentials::Uniform(Potential::new(vec![f64::NAN, 1.0], 0.0));
        assert!(validate_model(&spec).is_err());
        let mut spec = quartic_nn(1);
        spec.beta = 0.0;
        assert!(validate_model(&spec).is_err());
    }

    #[test]
    fn weight_closed_forms() {
        let e = WeightFamily::exponential(1.0, 2);
        assert_eq!(weight(&e, &[3, -1], &[3, -1]).unwrap(), 1.0);
        assert!((weight(&e, &[0, 0], &[2, 0]).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
        let p = WeightFamily::polynomial(2.0, 1.0, 1);
        assert!((weight(&p, &[0], &[1]).unwrap() - 0.25).abs() < 1e-15);
        assert!(weight(&WeightFamily::polynomial(0.5, 1.0, 1), &[0], &[1]).is_err());
        assert!(weight(&WeightFamily::exponential(-1.0, 1), &[0], &[1]).is_err());
    }

    #[test]
    fn nearest_neighbor_j_hat_alpha_closed_form() {
        for d in 1..=4 {
            let spec = quartic_nn(d);
            for alpha in [0.1, 0.5, 1.0, 2.0] {
                let f = WeightFamily::exponential(alpha, d);
                let v = j_hat_alpha(&spec, &f).unwrap().value;
                let expect = 2.0 * d as f64 * alpha.exp();
                assert!((v - expect).abs() < 1e-12 * expect);
            }
        }
    }

    #[test]
    fn j_hat_alpha_tends_to_j_hat_zero() {
        let spec = quartic_nn(3);
        let j0 = j_hat_alpha(&spec, &WeightFamily::exponential(0.0, 3)).unwrap().value;
        assert_eq!(j0, 6.0);
        let mut prev = f64::INFINITY;
        for k in 1..12 {
            let alpha = 2f64.powi(-k);
            let v = j_hat_alpha(&spec, &WeightFamily::exponential(alpha, 3)).unwrap().value;
            assert!(v < prev && v > j0);
            prev = v;
        }
        assert!((prev - j0).abs() < 6.0 * 1e-3);
    }

    #[test]
    fn zero_coupling_gives_zero_norm() {
        let mut spec = quartic_nn(2);
        spec.couplings = DynamicalMatrix::ExponentialDecay { j: 0.0, rate: 1.0 };
        let v = j_hat_alpha(&spec, &WeightFamily::exponential(0.5, 2)).unwrap();
        assert_eq!(v.value, 0.0);
        spec.couplings = DynamicalMatrix::NearestNeighbor { j: 0.0 };
        assert_eq!(j_hat_alpha(&spec, &WeightFamily::polynomial(1.5, 1.0, 2)).unwrap().value, 0.0);
    }

    #[test]
    fn exponential_decay_sum_matches_brute_force() {
        let mut spec = quartic_nn(2);
        spec.couplings = DynamicalMatrix::ExponentialDecay { j: 0.7, rate: 1.5 };
        let s = j_hat_alpha(&spec, &WeightFamily::exponential(0.5, 2)).unwrap();
        assert!(s.converged);
        // brute force over a big square
        let mut brute = 0.0;
        for x in -60i64..=60 {
            for y in -60i64..=60 {
                if x == 0 && y == 0 {
                    continue;
                }
                let r = ((x * x + y * y) as f64).sqrt();
                brute += 0.7 * (-1.0 * r).exp();
            }
        }
        assert!((s.value - brute).abs() < 1e-11 * brute, "{} vs {}", s.value, brute);
    }

    #[test]
    fn divergent_combinations_are_reported() {
        let mut spec = quartic_nn(1);
        spec.couplings = DynamicalMatrix::ExponentialDecay { j: 1.0, rate: 1.0 };
        assert!(matches!(
            j_hat_alpha(&spec, &WeightFamily::exponential(1.5, 1)),
            Err(Error::Divergent(_))
        ));
        spec.couplings = DynamicalMatrix::PolynomialDecay { j: 1.0, gamma: 2.0 };
        assert!(matches!(
            j_hat_alpha(&spec, &WeightFamily::exponential(0.1, 1)),
            Err(Error::Divergent(_))
        ));
        assert!(matches!(
            j_hat_alpha(&spec, &WeightFamily::polynomial(2.5, 1.0, 1)),
            Err(Error::Divergent(_))
        ));
        let s = j_hat_alpha(&spec, &WeightFamily::polynomial(1.2, 1.0, 1)).unwrap();
        assert!(s.value > 0.0 && s.tail_bound > 0.0);
    }

    #[test]
    fn representation_counts_small_cases() {
        let c = representation_counts(2, 5);
        assert_eq!(c, vec![1.0, 4.0, 4.0, 0.0, 4.0, 8.0]);
        let c3 = representation_counts(3, 3);
        assert_eq!(c3, vec![1.0, 6.0, 12.0, 8.0]);
    }

    #[test]
    fn gamma_matches_factorials() {
        assert!((gamma_fn(5.0) - 24.0).abs() < 1e-12);
        assert!((gamma_fn(0.5) - PI.sqrt()).abs() < 1e-13);
    }
}
