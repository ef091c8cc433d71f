//! Brillouin-zone integrals of the simple-cubic dispersion
//! `E(p) = sum_j (1 - cos p_j)`.
//!
//! The production route writes every integrand through a Laplace transform
//! so that the zone average factorizes into powers of
//! `g(t) = e^{-t} I_0(t) = (2 pi)^{-1} int e^{-t(1 - cos p)} dp`, leaving one
//! dimensional integrals over `t` that are done with the trapezoid rule in
//! `u = log t`. The product midpoint grid is kept as an independent route.

use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// `e^{-t} I_0(t)` for `t >= 0`.
pub fn scaled_bessel_i0(t: f64) -> f64 {
    if t < 0.0 {
        return scaled_bessel_i0(-t) * (2.0 * t).exp();
    }
    if t <= 30.0 {
        let q = 0.25 * t * t;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > 1e-18 * sum {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        sum * (-t).exp()
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0_f64;
        loop {
            let next = term * (2.0 * k - 1.0).powi(2) / (8.0 * k * t);
            if next < 1e-18 * sum || next > term {
                break;
            }
            sum += next;
            term = next;
            k += 1.0;
        }
        sum / (2.0 * PI * t).sqrt()
    }
}

/// `S(t) = sum_{n >= 1} exp(-n^2 pi^2 t)`, switching to the Poisson-summed
/// form for small `t`.
pub fn theta_tail(t: f64) -> f64 {
    if t >= 0.5 {
        theta_tail_direct(t)
    } else {
        theta_tail_poisson(t)
    }
}

pub fn theta_tail_direct(t: f64) -> f64 {
    let mut sum = 0.0;
    for n in 1.. {
        let term = (-(n * n) as f64 * PI * PI * t).exp();
        sum += term;
        if term < 1e-18 * sum.max(f64::MIN_POSITIVE) || term == 0.0 {
            break;
        }
    }
    sum
}

pub fn theta_tail_poisson(t: f64) -> f64 {
    let mut sum = 1.0;
    for k in 1.. {
        let term = 2.0 * (-((k * k) as f64) / t).exp();
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    0.5 * (sum / (PI * t).sqrt() - 1.0)
}

/// Trapezoid rule on `(0, inf)` after `t = e^u`: returns `int f(t) dt`.
/// The sum is extended in both directions until the terms are negligible.
fn log_trapezoid(f: impl Fn(f64) -> f64, step: f64) -> Result<f64> {
    let term = |k: i64| {
        let t = (k as f64 * step).exp();
        t * f(t)
    };
    let mut sum = term(0);
    for dir in [1i64, -1] {
        let mut k = dir;
        let mut quiet = 0;
        loop {
            let v = term(k);
            if !v.is_finite() {
                return Err(Error::Numeric(format!("non-finite integrand at t = e^{}", k as f64 * step)));
            }
            sum += v;
            quiet = if v.abs() < 1e-19 * sum.abs() { quiet + 1 } else { 0 };
            if quiet >= 8 {
                break;
            }
            if (k as f64 * step).abs() > 400.0 {
                return Err(Error::Numeric("integrand does not decay".into()));
            }
            k += dir;
        }
    }
    Ok(sum * step)
}

/// A quadrature result together with its resolution-halving error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Step and accepted error of the Laplace-route quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LaplaceQuadrature {
    pub step: f64,
    pub tolerance: f64,
}

impl Default for LaplaceQuadrature {
    fn default() -> Self {
        Self { step: 0.1, tolerance: 1e-10 }
    }
}

impl LaplaceQuadrature {
    pub fn with_step(step: f64) -> Self {
        Self { step, ..Self::default() }
    }

    fn estimate(&self, f: impl Fn(f64) -> f64) -> Result<Estimate> {
        if !(self.step > 0.0 && self.step <= 1.0) {
            return Err(Error::InvalidParameter(format!("quadrature step {} not in (0, 1]", self.step)));
        }
        let fine = log_trapezoid(&f, self.step)?;
        let coarse = log_trapezoid(&f, 2.0 * self.step)?;
        let error = (fine - coarse).abs();
        if error > self.tolerance * fine.abs() {
            return Err(Error::Numeric(format!(
                "quadrature step {} too coarse: estimated relative error {:.2e}",
                self.step,
                error / fine.abs()
            )));
        }
        Ok(Estimate { value: fine, error })
    }
}

/// `(2 pi)^{-d} int dp / sqrt(E(p))`.
pub fn theta_integral(d: usize, quad: &LaplaceQuadrature) -> Result<Estimate> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("the zone integral of E^(-1/2) diverges for d = {d}")));
    }
    let di = d as i32;
    let est = quad.estimate(|t| scaled_bessel_i0(t).powi(di) / t.sqrt())?;
    let s = PI.sqrt();
    Ok(Estimate { value: est.value / s, error: est.error / s })
}

/// `(2 pi)^{-d} int dp / E(p)`, the Watson integral.
pub fn watson_integral(d: usize, quad: &LaplaceQuadrature) -> Result<Estimate> {
    if d < 3 {
        return Err(Error::InvalidParameter(format!("the zone integral of 1/E diverges for d = {d}")));
    }
    let di = d as i32;
    quad.estimate(|t| scaled_bessel_i0(t).powi(di))
}

/// `(2 pi)^{-d} int coth(c sqrt(E)) / sqrt(E) dp` for `c > 0`.
pub fn coth_integral(d: usize, c: f64, quad: &LaplaceQuadrature) -> Result<Estimate> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("coth scale must be positive, got {c}")));
    }
    let w = watson_integral(d, quad)?;
    let di = d as i32;
    let c2 = c * c;
    let rest = quad.estimate(|s| theta_tail(s) * scaled_bessel_i0(c2 * s).powi(di))?;
    Ok(Estimate {
        value: w.value / c + 2.0 * c * rest.value,
        error: w.error / c + 2.0 * c * rest.error,
    })
}

/// Midpoint product rule for the zone average of an integrand that is even
/// in every coordinate, evaluated on the positive octant with `n` points
/// per axis. Midpoints never touch `p = 0`.
pub fn zone_midpoint(d: usize, n: usize, f: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
    assert!(d >= 1 && n >= 1);
    let h = PI / n as f64;
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i0| {
            let mut idx = vec![0usize; d];
            idx[0] = i0;
            let mut p = vec![0.0; d];
            let mut acc = 0.0;
            let inner = n.pow(d as u32 - 1);
            for flat in 0..inner {
                let mut r = flat;
                for k in (1..d).rev() {
                    idx[k] = r % n;
                    r /= n;
                }
                for k in 0..d {
                    p[k] = (idx[k] as f64 + 0.5) * h;
                }
                acc += f(&p);
            }
            acc
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / (n as f64).powi(d as i32)
}

/// Same rule on the full zone `(-pi, pi]^d` with `2n` points per axis.
pub fn zone_midpoint_full(d: usize, n: usize, f: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
    let m = 2 * n;
    let h = 2.0 * PI / m as f64;
    let count = m.pow(d as u32);
    let total: f64 = (0..count)
        .map(|flat| {
            let mut r = flat;
            let p: Vec<f64> = (0..d)
                .map(|_| {
                    let i = r % m;
                    r /= m;
                    -PI + (i as f64 + 0.5) * h
                })
                .collect();
            f(&p)
        })
        .sum();
    total / count as f64
}

pub fn dispersion(p: &[f64]) -> f64 {
    p.iter().map(|x| 1.0 - x.cos()).sum()
}

/// Richardson extrapolation of midpoint results at `n, 2n, 4n, ...` given
/// the leading error exponents in `h`.
pub fn richardson(values: &[f64], exponents: &[i32]) -> f64 {
    let mut table = values.to_vec();
    for &p in exponents.iter().take(values.len() - 1) {
        let f = 2f64.powi(p);
        table = table.windows(2).map(|w| (f * w[1] - w[0]) / (f - 1.0)).collect();
    }
    table[0]
}

/// Grid route for `(2 pi)^{-d} int dp / sqrt(E)` with Richardson
/// extrapolation over the resolutions `n0, 2 n0, ...`.
pub fn theta_integral_grid(d: usize, n0: usize, levels: usize) -> f64 {
    let values: Vec<f64> = (0..levels)
        .map(|k| zone_midpoint(d, n0 << k, |p| 1.0 / dispersion(p).sqrt()))
        .collect();
    richardson(&values, &singular_exponents(d, 1))
}

/// Error exponents of the midpoint rule for an integrand with an
/// `|p|^{-2 lambda}` singularity at the origin.
pub fn singular_exponents(d: usize, lambda: i32) -> Vec<i32> {
    let mut e: Vec<i32> = vec![2, 4, 6];
    let s = d as i32 - 2 * lambda;
    for k in 0..3 {
        e.push(s + 2 * k);
    }
    e.sort_unstable();
    e.dedup();
    e.retain(|&x| x > 0);
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::gamma_fn;

    #[test]
    fn scaled_bessel_matches_angular_average() {
        for &t in &[0.0, 1e-3, 0.5, 2.0, 10.0, 29.9, 30.1, 55.0, 300.0] {
            let n = 4096;
            let avg: f64 = (0..n)
                .map(|k| {
                    let th = PI * (k as f64 + 0.5) / n as f64;
                    (-t * (1.0 - th.cos())).exp()
                })
                .sum::<f64>()
                / n as f64;
            let g = scaled_bessel_i0(t);
            assert!((g - avg).abs() < 1e-14 * avg.max(1e-300) + 1e-16, "t={t} {g} {avg}");
        }
    }

    #[test]
    fn theta_tail_forms_agree() {
        for &t in &[0.05, 0.2, 0.4, 0.5, 0.8, 1.5] {
            let a = theta_tail_direct(t);
            let b = theta_tail_poisson(t);
            assert!((a - b).abs() < 1e-12 * a + 1e-15, "t={t} {a} {b}");
        }
    }

    #[test]
    fn watson_integral_closed_form() {
        // (sqrt(6) / (96 pi^3)) Gamma(1/24) Gamma(5/24) Gamma(7/24) Gamma(11/24)
        let exact = 6f64.sqrt() / (96.0 * PI.powi(3))
            * gamma_fn(1.0 / 24.0)
            * gamma_fn(5.0 / 24.0)
            * gamma_fn(7.0 / 24.0)
            * gamma_fn(11.0 / 24.0);
        let w = watson_integral(3, &LaplaceQuadrature::default()).unwrap();
        assert!((w.value - exact).abs() < 1e-12, "{} {}", w.value, exact);
        assert!((exact - 0.505_462_019_717_326).abs() < 1e-12);
    }

    #[test]
    fn octant_reduction_is_exact() {
        for d in 1..=3 {
            let f = |p: &[f64]| 1.0 / (0.3 + dispersion(p)).sqrt() + p[0].cos() * p[d - 1].cos();
            let oct = zone_midpoint(d, 8, f);
            let full = zone_midpoint_full(d, 8, f);
            assert!((oct - full).abs() < 1e-12 * full.abs());
        }
    }

    #[test]
    fn laplace_and_grid_routes_agree() {
        let lap = theta_integral(3, &LaplaceQuadrature::default()).unwrap().value;
        let grid = theta_integral_grid(3, 32, 3);
        assert!((lap - grid).abs() < 2e-5 * lap, "{lap} {grid}");
    }

    #[test]
    fn coth_integral_matches_grid_route() {
        let c = 0.7;
        let lap = coth_integral(3, c, &LaplaceQuadrature::default()).unwrap().value;
        let f = |p: &[f64]| {
            let e = dispersion(p).sqrt();
            1.0 / ((c * e).tanh() * e)
        };
        let vals: Vec<f64> = (0..3).map(|k| zone_midpoint(3, 32 << k, f)).collect();
        let grid = richardson(&vals, &singular_exponents(3, 1));
        assert!((lap - grid).abs() < 2e-5 * lap, "{lap} {grid}");
    }

    #[test]
    fn rejects_divergent_dimensions() {
        assert!(theta_integral(1, &LaplaceQuadrature::default()).is_err());
        assert!(watson_integral(2, &LaplaceQuadrature::default()).is_err());
        assert!(LaplaceQuadrature { step: 0.9, tolerance: 1e-14 }.estimate(|t| (-t).exp()).is_err());
    }
}
