//! Node sets used for every slice variable by the exact oracle.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{ensure_positive, Error, Result};
use crate::gauss::gauss_hermite;
use crate::lattice::DiscreteAction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureKind {
    Trapezoid,
    GaussHermite,
}

/// Symmetric nodes with positive weights approximating `int f(x) dx`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct QuadratureScheme {
    pub kind: QuadratureKind,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureScheme {
    /// `q` equally spaced nodes on `[-half_width, half_width]`.
    pub fn trapezoid(q: usize, half_width: f64) -> Result<Self> {
        ensure_positive("half width", half_width)?;
        if q < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 nodes, got {q}")));
        }
        let h = 2.0 * half_width / (q - 1) as f64;
        let nodes = (0..q).map(|i| -half_width + i as f64 * h).collect();
        Ok(Self { kind: QuadratureKind::Trapezoid, nodes, weights: vec![h; q] })
    }

    /// Gauss-Hermite rule centred on a Gaussian of standard deviation `sigma`.
    pub fn gauss_hermite(q: usize, sigma: f64) -> Result<Self> {
        ensure_positive("sigma", sigma)?;
        if q == 0 || q > 150 {
            return Err(Error::InvalidParameter(format!("Gauss-Hermite order {q} outside 1..=150")));
        }
        let (z, w) = gauss_hermite(q);
        let s = sigma * 2f64.sqrt();
        let nodes = z.iter().map(|z| s * z).collect();
        let weights = z.iter().zip(&w).map(|(z, w)| s * w * (z * z).exp()).collect();
        Ok(Self { kind: QuadratureKind::GaussHermite, nodes, weights })
    }

    /// Gauss-Hermite rule matched to the on-slice Gaussian factor of an action.
    pub fn gauss_hermite_for(action: &DiscreteAction, q: usize) -> Result<Self> {
        let precision = 2.0 * action.mass / action.epsilon + action.epsilon * action.rigidity;
        Self::gauss_hermite(q, 1.0 / precision.sqrt())
    }

    /// Trapezoid grid wide enough that the single-site marginal is negligible
    /// at its ends, both classically and semiclassically.
    pub fn trapezoid_for(action: &DiscreteAction, q: usize) -> Result<Self> {
        Self::trapezoid(q, auto_half_width(action))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `|sum_i w_i exp(-x_i^2 / 2 sigma^2) - sqrt(2 pi) sigma|`.
    pub fn gaussian_normalization_error(&self, sigma: f64) -> f64 {
        let s: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * (-x * x / (2.0 * sigma * sigma)).exp())
            .sum();
        (s - (2.0 * PI).sqrt() * sigma).abs()
    }
}

/// Half-width beyond which every site's slice marginal is below `e^{-36}`.
pub fn auto_half_width(action: &DiscreteAction) -> f64 {
    let mut width: f64 = 1.0;
    for (l, pot) in action.potentials.iter().enumerate() {
        let field = action.boundary_field[l].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let coupling: f64 = action
            .bonds
            .iter()
            .filter(|b| b.i == l || b.j == l)
            .map(|b| b.coupling.abs())
            .sum();
        // Neighbours may pull with at most their own width; treat the
        // couplings as softening the harmonic term.
        let v = |x: f64| {
            0.5 * (action.rigidity - coupling) * x * x + pot.eval(x).min(pot.eval(-x)) - field * x.abs()
        };
        let classical = |x: f64| action.beta * v(x) >= 36.0;
        let step = 0.01;
        let mut x: f64 = step;
        let mut wkb = 0.0;
        loop {
            let vx = v(x).max(0.0);
            wkb += (2.0 * action.mass * vx).sqrt() * step;
            if classical(x) && wkb >= 18.0 {
                break;
            }
            x += step;
            if x > 1e3 {
                break;
            }
        }
        width = width.max(x);
    }
    width
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_hermite_normalization() {
        for q in [4, 8, 16, 40] {
            let s = QuadratureScheme::gauss_hermite(q, 0.37).unwrap();
            assert!(s.weights.iter().all(|w| *w > 0.0));
            assert!(s.gaussian_normalization_error(0.37) < 1e-12);
            for i in 0..q {
                assert!((s.nodes[i] + s.nodes[q - 1 - i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn trapezoid_normalization() {
        let s = QuadratureScheme::trapezoid(41, 8.0).unwrap();
        assert!(s.gaussian_normalization_error(1.0) < 1e-12);
        assert!(QuadratureScheme::trapezoid(1, 1.0).is_err());
    }
}
