//! Laguerre-class conditions on single-site potentials, finite-volume
//! pressure in an external field and the zeros of the partition function
//! in `t = h^2`.
//!
//! Everything here is finite volume. Uniqueness at nonzero field is an
//! infinite-volume statement and is not decided by these checks.

use nalgebra::DMatrix;
use num_complex::Complex64;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::DiscreteAction;
use crate::oracle::{exact_expectations_with, transfer_matrix, Engine, Observable};
use crate::quadrature::QuadratureScheme;

/// Highest degree of `b + u'` handled by the root certification.
pub const MAX_LAGUERRE_DEGREE: usize = 8;
const IMAG_TOL: f64 = 1e-7;

/// `phi0 exp(gamma0 t) t^n prod (1 + gamma_i t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LaguerreCandidate {
    pub phi0: f64,
    pub gamma0: f64,
    pub n: usize,
    pub gammas: Vec<f64>,
}

impl LaguerreCandidate {
    pub fn eval(&self, t: f64) -> f64 {
        self.phi0
            * (self.gamma0 * t).exp()
            * t.powi(self.n as i32)
            * self.gammas.iter().map(|g| 1.0 + g * t).product::<f64>()
    }

    /// Zeros at `t = 0` (with multiplicity `n`) and `t = -1/gamma_i`.
    pub fn zeros(&self) -> Vec<f64> {
        let mut z = vec![0.0; self.n];
        z.extend(self.gammas.iter().filter(|g| **g > 0.0).map(|g| -1.0 / g));
        z
    }

    pub fn is_admissible(&self) -> bool {
        self.phi0 > 0.0 && self.gamma0 >= 0.0 && self.gammas.iter().all(|g| *g >= 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LaguerreCheck {
    pub holds: bool,
    /// The smallest admissible `b` found.
    pub shift: Option<f64>,
    pub witness: Option<LaguerreCandidate>,
    /// Roots of `b_min + u'`; when the condition fails, `violation` is
    /// the first one off the nonpositive axis.
    pub roots: Vec<(f64, f64)>,
    pub violation: Option<(f64, f64)>,
}

/// Real polynomial evaluation, coefficients in increasing degree.
fn horner(c: &[f64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * z + a)
}

fn trim(c: &[f64]) -> Vec<f64> {
    let mut c = c.to_vec();
    while c.len() > 1 && *c.last().unwrap() == 0.0 {
        c.pop();
    }
    c
}

/// Roots of a real polynomial (increasing coefficients) by the
/// Aberth-Ehrlich simultaneous iteration.
pub fn polynomial_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let c = trim(coeffs);
    let n = c.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite polynomial coefficient".into()));
    }
    // Zero roots exactly, then balance the rest to root size about 1.
    let zeros = c.iter().take_while(|v| **v == 0.0).count();
    let c = &c[zeros..];
    let m = c.len() - 1;
    let mut out = vec![Complex64::new(0.0, 0.0); zeros];
    if m == 0 {
        return Ok(out);
    }
    let rho = (c[0].abs() / c[m].abs()).powf(1.0 / m as f64);
    let scaled: Vec<f64> = (0..=m).map(|k| c[k] * rho.powi(k as i32) / (c[m] * rho.powi(m as i32))).collect();
    let deriv: Vec<f64> = (1..=m).map(|k| k as f64 * scaled[k]).collect();
    let mut z: Vec<Complex64> = (0..m)
        .map(|k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / m as f64 + 0.4))
        .collect();
    let mut converged = false;
    for _ in 0..500 {
        let mut biggest: f64 = 0.0;
        for i in 0..m {
            let p = horner(&scaled, z[i]);
            let dp = horner(&deriv, z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..m).filter(|&j| j != i).map(|j| 1.0 / (z[i] - z[j])).sum();
            let step = ratio / (1.0 - ratio * repulsion);
            if step.re.is_finite() && step.im.is_finite() {
                z[i] -= step;
                biggest = biggest.max(step.norm() / z[i].norm().max(1e-300));
            }
        }
        if biggest < 1e-15 {
            converged = true;
            break;
        }
    }
    if !converged {
        let residual = z.iter().map(|r| horner(&scaled, *r).norm()).fold(0.0, f64::max);
        if !(residual < 1e-8) {
            return Err(Error::Numeric(format!("root iteration did not converge (residual {residual:.2e})")));
        }
    }
    out.extend(z.iter().map(|r| {
        // Conjugate pairs of a real polynomial: snap tiny imaginary parts.
        let r = r * rho;
        if r.im.abs() <= 1e-14 * r.norm() { Complex64::new(r.re, 0.0) } else { r }
    }));
    out.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.im.total_cmp(&b.im)));
    Ok(out)
}

fn is_nonpositive_real(z: Complex64) -> bool {
    let scale = z.norm().max(1.0);
    z.im.abs() <= IMAG_TOL * scale && z.re <= 1e-12 * scale
}

/// Decide membership of the polynomial `c` (increasing degree) in the
/// Laguerre class; closed form up to degree 2.
fn laguerre_polynomial(c: &[f64]) -> Result<Option<LaguerreCandidate>> {
    let c = trim(c);
    let deg = c.len() - 1;
    let lead = c[deg];
    if !(lead > 0.0) {
        return Ok(None);
    }
    let real_roots: Vec<f64> = match deg {
        0 => Vec::new(),
        1 => {
            if c[0] < 0.0 {
                return Ok(None);
            }
            vec![-c[0] / c[1]]
        }
        2 => {
            let (a, b, cc) = (c[2], c[1], c[0]);
            let disc = b * b - 4.0 * a * cc;
            if disc < 0.0 || b < 0.0 || cc < 0.0 {
                return Ok(None);
            }
            let s = disc.sqrt();
            // Stable pair: q = -(b + s)/2, roots q/a and c/q.
            let q = -0.5 * (b + s);
            if q == 0.0 {
                vec![0.0, 0.0]
            } else {
                vec![q / a, cc / q]
            }
        }
        _ => {
            let roots = polynomial_roots(&c)?;
            if !roots.iter().all(|z| is_nonpositive_real(*z)) {
                return Ok(None);
            }
            roots.iter().map(|z| z.re.min(0.0)).collect()
        }
    };
    let mut n = 0;
    let mut phi0 = lead;
    let mut gammas = Vec::new();
    for r in real_roots {
        if r == 0.0 || (deg > 2 && r.abs() <= 1e-12) {
            n += 1;
        } else {
            phi0 *= -r;
            gammas.push(-1.0 / r);
        }
    }
    gammas.sort_by(|a, b| b.total_cmp(a));
    Ok(Some(LaguerreCandidate { phi0, gamma0: 0.0, n, gammas }))
}

/// Whether some `b >= b_min` puts `b + u'` in the Laguerre class, for a
/// real polynomial `u(t) = sum_k u[k-1] t^k` (so `u(0) = 0`).
///
/// The admissible shifts form a union of closed intervals whose ends are
/// `-u'(0)` or critical values of `-u'`, so only those and `b_min` are
/// tried, smallest first.
pub fn check_laguerre_condition(u: &[f64], b_min: f64) -> Result<LaguerreCheck> {
    if u.iter().chain(std::iter::once(&b_min)).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite coefficient".into()));
    }
    let deriv: Vec<f64> = trim(&u.iter().enumerate().map(|(k, &c)| (k + 1) as f64 * c).collect::<Vec<_>>());
    let deg = deriv.len() - 1;
    if deg > MAX_LAGUERRE_DEGREE {
        return Err(Error::InvalidParameter(format!(
            "b + u' has degree {deg}, above the supported {MAX_LAGUERRE_DEGREE}"
        )));
    }
    let shifted = |s: f64| {
        let mut c = deriv.clone();
        c[0] += s;
        c
    };
    let base = shifted(b_min);
    let roots = polynomial_roots(&base)?;
    let mut candidates = vec![b_min, -deriv[0]];
    if deg >= 2 {
        let second: Vec<f64> = (1..=deg).map(|k| k as f64 * deriv[k]).collect();
        for z in polynomial_roots(&second)? {
            if z.im.abs() <= IMAG_TOL * z.norm().max(1.0) && z.re <= 0.0 {
                candidates.push(-horner(&deriv, Complex64::new(z.re, 0.0)).re);
            }
        }
    }
    candidates.retain(|s| *s >= b_min);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    for s in candidates {
        if let Some(w) = laguerre_polynomial(&shifted(s))? {
            return Ok(LaguerreCheck {
                holds: true,
                shift: Some(s),
                witness: Some(w),
                roots: roots.iter().map(|z| (z.re, z.im)).collect(),
                violation: None,
            });
        }
    }
    let violation = if !(base[base.len() - 1] > 0.0) {
        None
    } else {
        roots.iter().find(|z| !is_nonpositive_real(**z)).map(|z| (z.re, z.im))
    };
    Ok(LaguerreCheck {
        holds: false,
        shift: None,
        witness: None,
        roots: roots.iter().map(|z| (z.re, z.im)).collect(),
        violation,
    })
}

/// The condition for a potential `V(x) = v(x^2) - h x` with rigidity `a`:
/// some `b >= 0` with `b + (v + a t / 2)'` in the Laguerre class.
pub fn lee_yang_condition(even_coeffs: &[f64], rigidity: f64) -> Result<LaguerreCheck> {
    let mut u = even_coeffs.to_vec();
    if u.is_empty() {
        u.push(0.0);
    }
    u[0] += 0.5 * rigidity;
    check_laguerre_condition(&u, 0.0)
}

/// `p_Lambda(h) = |Lambda|^{-1} log Z_Lambda(h)` on a grid of fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PressureCurve {
    pub h: Vec<f64>,
    pub pressure: Vec<f64>,
    /// `|Lambda|^{-1} sum_l <int x_l dtau>`, the derivative of the pressure.
    pub magnetization: Vec<f64>,
    pub n_sites: usize,
    pub slices: usize,
}

impl PressureCurve {
    /// Largest `|p(h_i) - p(-h_i)|` over grid points mirrored in the grid.
    pub fn evenness_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, &h) in self.h.iter().enumerate() {
            if let Some(j) = self.h.iter().position(|&g| g == -h) {
                worst = worst.max((self.pressure[i] - self.pressure[j]).abs());
            }
        }
        worst
    }

    /// Second differences normalized to a second derivative.
    pub fn second_differences(&self) -> Vec<f64> {
        (1..self.h.len().saturating_sub(1))
            .map(|i| {
                let (h0, h1, h2) = (self.h[i - 1], self.h[i], self.h[i + 1]);
                let (p0, p1, p2) = (self.pressure[i - 1], self.pressure[i], self.pressure[i + 1]);
                2.0 * ((p2 - p1) / (h2 - h1) - (p1 - p0) / (h1 - h0)) / (h2 - h0)
            })
            .collect()
    }

    /// Central-difference derivative at interior points.
    pub fn central_derivative(&self) -> Vec<f64> {
        (1..self.h.len().saturating_sub(1))
            .map(|i| (self.pressure[i + 1] - self.pressure[i - 1]) / (self.h[i + 1] - self.h[i - 1]))
            .collect()
    }
}

fn magnetization_observable(action: &DiscreteAction) -> Vec<Observable> {
    (0..action.n_sites())
        .flat_map(|l| (0..action.p).map(move |t| Observable::moment(&[(l, t)])))
        .collect()
}

/// Pressure and magnetization per site at each field on `h_grid`, replacing
/// the field of every potential of `action`.
pub fn pressure_curve(action: &DiscreteAction, h_grid: &[f64], quad: &QuadratureScheme) -> Result<PressureCurve> {
    if h_grid.iter().any(|h| !h.is_finite()) {
        return Err(Error::InvalidParameter("field grid must be finite".into()));
    }
    let n = action.n_sites() as f64;
    let obs = magnetization_observable(action);
    let mut pressure = Vec::with_capacity(h_grid.len());
    let mut magnetization = Vec::with_capacity(h_grid.len());
    for &h in h_grid {
        let a = action.with_uniform_field(h);
        let r = exact_expectations_with(&a, &obs, quad, Engine::Auto)?;
        pressure.push(r.log_partition / n);
        magnetization.push(action.epsilon * r.expectations.iter().sum::<f64>() / n);
    }
    Ok(PressureCurve {
        h: h_grid.to_vec(),
        pressure,
        magnetization,
        n_sites: action.n_sites(),
        slices: action.p,
    })
}

/// Taylor coefficients `c_k` of `Z(h)/Z(0)` up to degree `max_degree`,
/// where the field couples to `S = eps sum x_{l,t}`. So
/// `c_{2n} = <S^{2n}>/(2n)!` and odd coefficients vanish for even
/// potentials.
///
/// The slice transfer matrix is expanded as a matrix-valued power series
/// in `h` and raised to the power `P` by repeated squaring.
pub fn field_series(action: &DiscreteAction, quad: &QuadratureScheme, max_degree: usize) -> Result<Vec<f64>> {
    let tm = transfer_matrix(action, quad)?;
    let dim = tm.states.len();
    let sigma: Vec<f64> = tm
        .states
        .iter()
        .map(|st| action.epsilon * st.iter().map(|&a| quad.nodes[a]).sum::<f64>())
        .collect();
    let lmax = nalgebra::SymmetricEigen::new(tm.matrix.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if !(lmax > 0.0) {
        return Err(Error::Numeric("transfer matrix has no positive eigenvalue".into()));
    }
    let k_max = max_degree;
    let mut a: Series = Vec::with_capacity(k_max + 1);
    let mut fact = 1.0;
    for k in 0..=k_max {
        if k > 0 {
            fact *= k as f64;
        }
        let mut m = tm.matrix.clone() / lmax;
        for s in 0..dim {
            for r in 0..dim {
                m[(s, r)] *= (0.5 * (sigma[s] + sigma[r])).powi(k as i32) / fact;
            }
        }
        a.push(m);
    }
    let p = action.p;
    let first = series_pow(&a, p / 2, k_max);
    let second = if p % 2 == 0 { first.clone() } else { series_mul(&first, &a, k_max) };
    let traces = series_trace_product(&first, &second, k_max);
    let z0 = traces[0];
    if !(z0 > 0.0) || !z0.is_finite() {
        return Err(Error::Numeric("partition function series lost its constant term".into()));
    }
    Ok(traces.iter().map(|t| t / z0).collect())
}

type Series = Vec<DMatrix<f64>>;

fn series_mul(x: &Series, y: &Series, k_max: usize) -> Series {
    let dim = x[0].nrows();
    (0..=k_max)
        .map(|k| {
            let mut acc = DMatrix::<f64>::zeros(dim, dim);
            for i in 0..=k {
                acc.gemm(1.0, &x[i], &y[k - i], 1.0);
            }
            acc
        })
        .collect()
}

fn series_pow(a: &Series, n: usize, k_max: usize) -> Series {
    let dim = a[0].nrows();
    let mut result: Series = (0..=k_max)
        .map(|k| if k == 0 { DMatrix::identity(dim, dim) } else { DMatrix::zeros(dim, dim) })
        .collect();
    let mut base = a.clone();
    let mut e = n;
    let mut first = true;
    while e > 0 {
        if e & 1 == 1 {
            result = if first { base.clone() } else { series_mul(&result, &base, k_max) };
            first = false;
        }
        e >>= 1;
        if e > 0 {
            base = series_mul(&base, &base, k_max);
        }
    }
    result
}

fn series_trace_product(x: &Series, y: &Series, k_max: usize) -> Vec<f64> {
    (0..=k_max)
        .map(|k| {
            let mut terms: Vec<f64> = (0..=k).map(|i| x[i].component_mul(&y[k - i].transpose()).sum()).collect();
            terms.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
            neumaier(&terms)
        })
        .collect()
}

/// Compensated sum.
fn neumaier(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ZeroClass {
    /// Every root inside the trust radius is real and negative.
    Consistent,
    /// No root lies inside the trust radius.
    ConsistentVacuous,
    /// Some root inside the trust radius is off the negative axis.
    Violation,
    /// The truncation cannot be trusted anywhere useful.
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ZeroReport {
    pub truncation: usize,
    /// `phi_n = <S^{2n}>/(2n)!`, `n = 0..=truncation`.
    pub coefficients: Vec<f64>,
    pub roots: Vec<(f64, f64)>,
    pub trust_radius: f64,
    pub in_radius: Vec<(f64, f64)>,
    pub classification: ZeroClass,
}

/// Radius where the last term of the truncation stops being negligible:
/// half the smallest `r` with `|c_N| r^N > 1e-6 sum_n |c_n| r^n`.
pub fn trust_radius(coeffs: &[f64]) -> f64 {
    let n = coeffs.len() - 1;
    if n == 0 {
        return 0.0;
    }
    let last = coeffs[n].abs();
    if last == 0.0 {
        return f64::INFINITY;
    }
    let ratio = |r: f64| {
        let total: f64 = coeffs.iter().enumerate().map(|(k, c)| c.abs() * r.powi(k as i32)).sum();
        last * r.powi(n as i32) / total
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while ratio(hi) <= 1e-6 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) > 1e-6 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * hi
}

/// Classify the roots of the truncated series `sum_n coeffs[n] t^n`.
pub fn classify_series(coeffs: &[f64]) -> Result<ZeroReport> {
    let n = coeffs.len().saturating_sub(1);
    if n == 0 || coeffs.iter().any(|c| !c.is_finite()) || !(coeffs[0] > 0.0) {
        return Ok(ZeroReport {
            truncation: n,
            coefficients: coeffs.to_vec(),
            roots: Vec::new(),
            trust_radius: 0.0,
            in_radius: Vec::new(),
            classification: ZeroClass::Inconclusive,
        });
    }
    let roots = polynomial_roots(coeffs)?;
    let radius = trust_radius(coeffs);
    let inside: Vec<Complex64> = roots.iter().copied().filter(|z| z.norm() < radius).collect();
    let classification = if radius == 0.0 {
        ZeroClass::Inconclusive
    } else if inside.is_empty() {
        ZeroClass::ConsistentVacuous
    } else if inside.iter().all(|z| z.im.abs() <= IMAG_TOL * z.norm().max(1.0) && z.re < 0.0) {
        ZeroClass::Consistent
    } else {
        ZeroClass::Violation
    };
    Ok(ZeroReport {
        truncation: n,
        coefficients: coeffs.to_vec(),
        roots: roots.iter().map(|z| (z.re, z.im)).collect(),
        trust_radius: radius,
        in_radius: inside.iter().map(|z| (z.re, z.im)).collect(),
        classification,
    })
}

/// Roots in `t = h^2` of the degree-`truncation` Taylor polynomial of
/// `Z(h)/Z(0)`, classified against the trust radius.
pub fn locate_partition_zeros(action: &DiscreteAction, quad: &QuadratureScheme, truncation: usize) -> Result<ZeroReport> {
    if !action.all_potentials_even() {
        return Err(Error::Precondition("zeros in h^2 need even potentials at zero field".into()));
    }
    if action.boundary_field.iter().flatten().any(|v| *v != 0.0) {
        return Err(Error::Precondition("zeros in h^2 need the zero boundary".into()));
    }
    if truncation == 0 {
        return Err(Error::InvalidParameter("truncation order must be positive".into()));
    }
    let series = field_series(action, quad, 2 * truncation)?;
    let coeffs: Vec<f64> = series.iter().step_by(2).copied().collect();
    classify_series(&coeffs)
}

/// Interpolation between decoupled blocks (`t = 0`) and the full box
/// (`t = 1`) by scaling the couplings between different blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct VanHoveReport {
    pub t: Vec<f64>,
    /// `|Lambda|^{-1} log Z(t)`.
    pub pressure: Vec<f64>,
    /// `|Lambda|^{-1} sum_inter J eps sum_tau <x_l x_l'>` at `t = 1`.
    pub slope_at_one: f64,
    /// `|Lambda|^{-1} sum_inter J` times the largest `eps sum_tau <x_l^2>`.
    pub coupling_bound: f64,
    pub monotone: bool,
    pub convex: bool,
    pub within_slope: bool,
    pub within_coupling_bound: bool,
}

/// Pressure along the interpolation for blocks labelled by `blocks[site]`.
pub fn van_hove_pressure_check(
    action: &DiscreteAction,
    blocks: &[usize],
    quad: &QuadratureScheme,
    steps: usize,
) -> Result<VanHoveReport> {
    if blocks.len() != action.n_sites() {
        return Err(Error::InvalidParameter("one block label per site is required".into()));
    }
    if !action.is_ferromagnetic() {
        return Err(Error::Precondition("pressure monotonicity needs ferromagnetic couplings".into()));
    }
    let steps = steps.max(2);
    let n = action.n_sites() as f64;
    let p = action.p;
    let inter: Vec<usize> = (0..action.bonds.len())
        .filter(|&k| blocks[action.bonds[k].i] != blocks[action.bonds[k].j])
        .collect();
    let scaled = |t: f64| {
        let mut a = action.clone();
        for &k in &inter {
            a.bonds[k].coupling *= t;
        }
        a
    };
    let t_grid: Vec<f64> = (0..=steps).map(|i| i as f64 / steps as f64).collect();
    let mut pressure = Vec::with_capacity(t_grid.len());
    for &t in &t_grid {
        pressure.push(exact_expectations_with(&scaled(t), &[], quad, Engine::Auto)?.log_partition / n);
    }
    let mut obs = Vec::new();
    for &k in &inter {
        let b = action.bonds[k];
        for tau in 0..p {
            obs.push(Observable::moment(&[(b.i, tau), (b.j, tau)]));
        }
    }
    let diag_start = obs.len();
    for l in 0..action.n_sites() {
        for tau in 0..p {
            obs.push(Observable::moment(&[(l, tau), (l, tau)]));
        }
    }
    let v = exact_expectations_with(action, &obs, quad, Engine::Auto)?.expectations;
    let eps = action.epsilon;
    let slope: f64 = inter
        .iter()
        .enumerate()
        .map(|(m, &k)| action.bonds[k].coupling * eps * v[m * p..(m + 1) * p].iter().sum::<f64>())
        .sum::<f64>()
        / n;
    let c = (0..action.n_sites())
        .map(|l| eps * v[diag_start + l * p..diag_start + (l + 1) * p].iter().sum::<f64>())
        .fold(0.0_f64, f64::max);
    let j_inter: f64 = inter.iter().map(|&k| action.bonds[k].coupling).sum::<f64>() / n;
    let tol = 1e-10;
    let monotone = pressure.windows(2).all(|w| w[1] >= w[0] - tol);
    let convex = pressure.windows(3).all(|w| w[2] - 2.0 * w[1] + w[0] >= -tol);
    let gain = pressure[steps] - pressure[0];
    Ok(VanHoveReport {
        t: t_grid,
        slope_at_one: slope,
        coupling_bound: j_inter * c,
        monotone,
        convex,
        within_slope: gain <= slope + tol,
        within_coupling_bound: gain <= j_inter * c + tol,
        pressure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_witness() {
        // u = t^2 + c t with b + c = 0 leaves 2t.
        let c = 0.7;
        let r = check_laguerre_condition(&[c, 1.0], -c).unwrap();
        assert!(r.holds);
        let w = r.witness.unwrap();
        assert_eq!(w.n, 1);
        assert!(w.gammas.is_empty());
        assert!((w.phi0 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn counterexample_fails() {
        for alpha in [0.1, 1.0, 10.0] {
            let r = check_laguerre_condition(&[alpha + 1.0, -2.0, 1.0], 0.0).unwrap();
            assert!(!r.holds);
        }
    }

    #[test]
    fn roots_of_known_polynomial() {
        // (t + 1)(t + 2)(t + 3)(t^2 + 1)
        let c = [6.0, 11.0, 12.0, 12.0, 6.0, 1.0];
        let r = polynomial_roots(&c).unwrap();
        let mut expect = vec![
            Complex64::new(-1.0, 0.0),
            Complex64::new(-2.0, 0.0),
            Complex64::new(-3.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
        ];
        for z in r {
            let k = expect.iter().position(|e| (e - z).norm() < 1e-10).expect("unexpected root");
            expect.remove(k);
        }
    }

    #[test]
    fn higher_degree_condition() {
        // u' = (t + 1)(t + 2)(t + 3)(t + 4) holds with b = 0.
        let d = [24.0, 50.0, 35.0, 10.0, 1.0];
        let u: Vec<f64> = d.iter().enumerate().map(|(k, c)| c / (k + 1) as f64).collect();
        let r = check_laguerre_condition(&u, 0.0).unwrap();
        assert!(r.holds);
        let w = r.witness.unwrap();
        assert_eq!(w.gammas.len(), 4);
        assert!((w.eval(0.5) - 1.5 * 2.5 * 3.5 * 4.5).abs() < 1e-9);
        // A pair of complex roots for every shift.
        let r = check_laguerre_condition(&[1.0, 0.0, 0.0, 0.0, 1.0], 0.0).unwrap();
        assert!(!r.holds && r.violation.is_some());
        let long = vec![1.0; 10];
        assert!(check_laguerre_condition(&long, 0.0).is_err());
    }

    #[test]
    fn gaussian_series_has_no_zeros_inside() {
        let c: Vec<f64> = (0..12).map(|n| 0.7f64.powi(n) / (1..=n).map(|k| k as f64).product::<f64>()).collect();
        let r = classify_series(&c).unwrap();
        assert_eq!(r.classification, ZeroClass::ConsistentVacuous);
        assert!(r.trust_radius > 0.0 && r.in_radius.is_empty());
    }

    #[test]
    fn compensated_sum() {
        assert_eq!(neumaier(&[1.0, 1e100, 1.0, -1e100]), 2.0);
    }
}
