//! One-site Schrödinger problems `-(1/2m) d^2/dx^2 + (a/2) x^2 + V(x)` on a
//! truncated interval, and the thermal quantities built from their spectra.
//!
//! The interval `(-x_max, x_max)` carries Dirichlet ends and a sinc
//! discrete-variable representation: the kinetic matrix is the exact
//! Fourier-sine kinetic energy projected on `n_points` interior nodes, the
//! potential and position operators are diagonal on those nodes.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use schemars::JsonSchema;
use std::f64::consts::PI;

use crate::error::{ensure_positive, Error, Result};
use crate::model::Potential;

/// Boltzmann weight below which a level is considered unoccupied.
pub const OCCUPATION_CUTOFF: f64 = 1e-14;
/// Largest ground-state probability tolerated near the domain edge.
pub const BOUNDARY_MASS_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Grid {
    /// Domain half-width; chosen automatically when absent.
    pub x_max: Option<f64>,
    pub n_points: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self { x_max: None, n_points: 200 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SchrodingerProblem {
    pub mass: f64,
    pub rigidity: f64,
    /// Anharmonic part added to `(a/2) x^2`.
    pub potential: Potential,
    pub grid: Grid,
    /// Number of trusted excited levels: energies `E_0 ..= E_{n_keep}`.
    pub n_keep: usize,
}

impl SchrodingerProblem {
    pub fn new(mass: f64, rigidity: f64, potential: Potential) -> Self {
        Self { mass, rigidity, potential, grid: Grid::default(), n_keep: 64 }
    }

    pub fn with_grid(mut self, n_points: usize, x_max: Option<f64>) -> Self {
        self.grid = Grid { x_max, n_points };
        self
    }

    pub fn with_n_keep(mut self, n_keep: usize) -> Self {
        self.n_keep = n_keep;
        self
    }

    pub fn total_potential(&self, x: f64) -> f64 {
        0.5 * self.rigidity * x * x + self.potential.eval(x)
    }

    fn check(&self) -> Result<()> {
        ensure_positive("mass", self.mass)?;
        crate::error::ensure_finite("rigidity", self.rigidity)?;
        for c in &self.potential.even_coeffs {
            crate::error::ensure_finite("potential coefficient", *c)?;
        }
        crate::error::ensure_finite("field", self.potential.field)?;
        if self.grid.n_points < 16 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 16 points, got {}",
                self.grid.n_points
            )));
        }
        if self.n_keep + 1 > self.grid.n_points / 2 {
            return Err(Error::InvalidParameter(format!(
                "n_keep = {} is too large for {} grid points",
                self.n_keep, self.grid.n_points
            )));
        }
        let confining = match self.potential.degree() {
            0 | 1 => {
                let quad = 0.5 * self.rigidity + self.potential.coeff(1);
                quad > 0.0
            }
            _ => self.potential.leading_coeff() > 0.0,
        };
        if !confining {
            return Err(Error::InvalidParameter(
                "potential is not confining: it does not grow to +infinity".into(),
            ));
        }
        Ok(())
    }
}

/// Eigenpairs of the discretized operator. All grid levels are stored;
/// only `E_0 ..= E_{n_keep}` are trusted.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub energies: Vec<f64>,
    /// Columns are eigenvectors, orthonormal in the plain Euclidean product.
    pub states: DMatrix<f64>,
    pub nodes: Vec<f64>,
    pub x_max: f64,
    pub n_keep: usize,
    pub mass: f64,
    hamiltonian: DMatrix<f64>,
}

fn sinc_dvr_hamiltonian(problem: &SchrodingerProblem, x_max: f64) -> (DMatrix<f64>, Vec<f64>) {
    let n = problem.grid.n_points;
    let np = (n + 1) as f64;
    let len = 2.0 * x_max;
    let dx = len / np;
    let nodes: Vec<f64> = (1..=n).map(|i| -x_max + i as f64 * dx).collect();
    let pref = PI * PI / (2.0 * len * len) / (2.0 * problem.mass);
    let mut h = DMatrix::<f64>::zeros(n, n);
    for i in 1..=n {
        for j in 1..=n {
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            let t = if i == j {
                (2.0 * np * np + 1.0) / 3.0 - 1.0 / (PI * i as f64 / np).sin().powi(2)
            } else {
                let a = (PI * (i as f64 - j as f64) / (2.0 * np)).sin().powi(2);
                let b = (PI * (i + j) as f64 / (2.0 * np)).sin().powi(2);
                1.0 / a - 1.0 / b
            };
            h[(i - 1, j - 1)] = sign * pref * t;
        }
        h[(i - 1, i - 1)] += problem.total_potential(nodes[i - 1]);
    }
    (h, nodes)
}

fn diagonalize(problem: &SchrodingerProblem, x_max: f64) -> Result<SpectralDecomposition> {
    let (h, nodes) = sinc_dvr_hamiltonian(problem, x_max);
    let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut states = DMatrix::<f64>::zeros(nodes.len(), nodes.len());
    for (col, &k) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).into_owned();
        // Fix the sign so the largest component is positive.
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v.neg_mut();
        }
        states.set_column(col, &v);
    }
    Ok(SpectralDecomposition {
        energies,
        states,
        nodes,
        x_max,
        n_keep: problem.n_keep,
        mass: problem.mass,
        hamiltonian: h,
    })
}

/// Solve the eigenproblem. Without an explicit `x_max` the domain is grown
/// until the potential at both ends exceeds `E_{n_keep}` by 25.
pub fn solve_schrodinger(problem: &SchrodingerProblem) -> Result<SpectralDecomposition> {
    problem.check()?;
    let dec = match problem.grid.x_max {
        Some(x_max) => {
            ensure_positive("x_max", x_max)?;
            diagonalize(problem, x_max)?
        }
        None => {
            // Grow x until V(x) >= E_{n_keep}(x) + 25 at both ends.
            let mut x_max = edge_root(problem, 25.0 + problem.n_keep as f64);
            let mut dec = diagonalize(problem, x_max)?;
            for _ in 0..60 {
                let next = edge_root(problem, dec.energies[problem.n_keep] + 25.0);
                if next <= x_max {
                    return finish(dec);
                }
                x_max = next.max(1.001 * x_max);
                dec = diagonalize(problem, x_max)?;
            }
            return Err(Error::Numeric("could not size the spatial domain".into()));
        }
    };
    finish(dec)
}

// Smallest x > 0 with min(V(x), V(-x)) >= target, past every interior bump.
fn edge_root(problem: &SchrodingerProblem, target: f64) -> f64 {
    let lowest = |x: f64| problem.total_potential(x).min(problem.total_potential(-x));
    let mut hi = 1.0;
    while lowest(hi) < target || (1..=64).any(|k| lowest(hi * (1.0 + k as f64 / 16.0)) < target) {
        hi *= 1.5;
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if lowest(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn finish(dec: SpectralDecomposition) -> Result<SpectralDecomposition> {
    let mass = dec.boundary_mass(0);
    if mass > BOUNDARY_MASS_TOL {
        return Err(Error::Numeric(format!(
            "domain too small: ground-state probability {mass:.3e} near the boundary"
        )));
    }
    Ok(dec)
}

/// Where the minimal spacing occurs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GapReport {
    pub gap: f64,
    /// `n` such that the gap is `E_n - E_{n-1}`.
    pub index: usize,
    pub at_truncation_edge: bool,
}

pub fn spectral_gap(dec: &SpectralDecomposition) -> Result<GapReport> {
    if dec.n_keep < 10 {
        return Err(Error::InvalidParameter(format!(
            "spectral gap needs at least 10 trusted levels, got {}",
            dec.n_keep
        )));
    }
    let (index, gap) = (1..=dec.n_keep)
        .map(|n| (n, dec.energies[n] - dec.energies[n - 1]))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one gap");
    if gap <= 0.0 {
        return Err(Error::Numeric(format!("degenerate levels at n = {index}")));
    }
    Ok(GapReport { gap, index, at_truncation_edge: index == dec.n_keep })
}

/// Integrated correlator with its truncation tail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SpectralSum {
    pub value: f64,
    pub tail_bound: f64,
    /// Highest level with Boltzmann weight above the cutoff.
    pub occupied_levels: usize,
}

impl SpectralDecomposition {
    pub fn n_points(&self) -> usize {
        self.nodes.len()
    }

    /// `(psi_n, x psi_k)` on the grid.
    pub fn x_element(&self, n: usize, k: usize) -> f64 {
        let a = self.states.column(n);
        let b = self.states.column(k);
        a.iter().zip(b.iter()).zip(&self.nodes).map(|((p, q), x)| p * q * x).sum()
    }

    /// `(psi_n, x^2 psi_n)`.
    pub fn x2_diagonal(&self, n: usize) -> f64 {
        self.states
            .column(n)
            .iter()
            .zip(&self.nodes)
            .map(|(p, x)| p * p * x * x)
            .sum()
    }

    /// `|| H psi_n - E_n psi_n ||`.
    pub fn residual(&self, n: usize) -> f64 {
        let v = self.states.column(n);
        let hv = &self.hamiltonian * v;
        (hv - v * self.energies[n]).norm()
    }

    /// Probability of level `n` in the outer tenth of the domain.
    pub fn boundary_mass(&self, n: usize) -> f64 {
        let cut = 0.9 * self.x_max;
        self.states
            .column(n)
            .iter()
            .zip(&self.nodes)
            .filter(|(_, x)| x.abs() > cut)
            .map(|(p, _)| p * p)
            .sum()
    }

    /// Weights `exp(-beta (E_n - E_0))` for the trusted levels, checking
    /// that the occupation has died out before the truncation edge.
    fn boltzmann(&self, beta: f64) -> Result<(Vec<f64>, usize)> {
        ensure_positive("beta", beta)?;
        let e0 = self.energies[0];
        let w: Vec<f64> = (0..=self.n_keep).map(|n| (-beta * (self.energies[n] - e0)).exp()).collect();
        let occupied = w.iter().rposition(|&x| x >= OCCUPATION_CUTOFF).unwrap_or(0);
        if occupied == self.n_keep {
            return Err(Error::Truncation { tail: w[self.n_keep], tolerance: OCCUPATION_CUTOFF });
        }
        Ok((w, occupied))
    }

    fn x_rows(&self, rows: usize) -> DMatrix<f64> {
        // X[n, k] = (psi_n, x psi_k) for n < rows and every grid level k.
        let n = self.n_points();
        let mut xs = self.states.clone();
        for (i, x) in self.nodes.iter().enumerate() {
            xs.row_mut(i).scale_mut(*x);
        }
        let top = self.states.columns(0, rows).transpose();
        let full = top * xs;
        debug_assert_eq!(full.ncols(), n);
        full
    }
}

/// `K^upp = (1/Z) sum_{n != n'} |x_{nn'}|^2 (e^{-beta E_n'} - e^{-beta E_n}) / (E_n - E_n')`.
pub fn upp_correlator_integral(dec: &SpectralDecomposition, beta: f64, mass: f64) -> Result<SpectralSum> {
    ensure_positive("mass", mass)?;
    let (w, occupied) = dec.boltzmann(beta)?;
    let z: f64 = w.iter().sum();
    let e = &dec.energies;
    let rows = occupied + 1;
    let x = dec.x_rows(rows);
    let pair = |n: usize, k: usize, wn: f64| -> f64 {
        // (w_k - w_n) / (E_n - E_k), stable near degeneracy.
        let delta = e[k] - e[n];
        if delta == 0.0 {
            return beta * wn;
        }
        -wn * (-beta * delta).exp_m1() / delta
    };
    let mut value = 0.0;
    let mut tail = 0.0;
    for n in 0..rows {
        for k in 0..dec.n_points() {
            if k == n {
                continue;
            }
            let x2 = x[(n, k)] * x[(n, k)];
            let term = if k < rows {
                x2 * pair(n, k, w[n])
            } else {
                // Pair with an unoccupied partner counted from both sides.
                2.0 * x2 * pair(n, k, w[n])
            };
            if k > dec.n_keep {
                tail += term.abs();
            }
            value += term;
        }
    }
    Ok(SpectralSum { value: value / z, tail_bound: tail / z, occupied_levels: occupied })
}

/// Thermal `<x^2>`.
pub fn low_variance(dec: &SpectralDecomposition, beta: f64) -> Result<f64> {
    let (w, occupied) = dec.boltzmann(beta)?;
    let z: f64 = w.iter().sum();
    Ok((0..=occupied).map(|n| w[n] * dec.x2_diagonal(n)).sum::<f64>() / z)
}

/// Imaginary-time two-point function `<x(0) x(tau)>`.
pub fn matsubara_two_point(dec: &SpectralDecomposition, beta: f64, tau: f64) -> Result<f64> {
    if !(0.0..=beta).contains(&tau) {
        return Err(Error::InvalidParameter(format!("tau = {tau} outside [0, {beta}]")));
    }
    let (w, occupied) = dec.boltzmann(beta)?;
    let z: f64 = w.iter().sum();
    let e0 = dec.energies[0];
    let rows = occupied + 1;
    let x = dec.x_rows(rows);
    let mut total = 0.0;
    // Occupied n paired with every k, plus the mirrored pairs where only k
    // is occupied.
    for n in 0..rows {
        let en = dec.energies[n] - e0;
        for k in 0..dec.n_points() {
            let ek = dec.energies[k] - e0;
            let x2 = x[(n, k)] * x[(n, k)];
            let forward = (-(beta - tau) * en - tau * ek).exp();
            total += x2 * forward;
            if k >= rows {
                total += x2 * (-(beta - tau) * ek - tau * en).exp();
            }
        }
    }
    Ok(total / z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harmonic(m: f64, a: f64) -> SchrodingerProblem {
        SchrodingerProblem::new(m, a, Potential::zero())
    }

    #[test]
    fn harmonic_levels_are_equally_spaced() {
        let dec = solve_schrodinger(&harmonic(1.0, 1.0)).unwrap();
        for n in 0..=64 {
            let exact = n as f64 + 0.5;
            assert!((dec.energies[n] - exact).abs() < 1e-6 * exact, "n={n} {}", dec.energies[n]);
        }
        let g = spectral_gap(&dec).unwrap();
        assert!((g.gap - 1.0).abs() < 1e-6);
    }

    #[test]
    fn shifted_rigidity_gap() {
        let p = SchrodingerProblem::new(2.0, 1.0, Potential::new(vec![1.0], 0.0));
        let dec = solve_schrodinger(&p).unwrap();
        let g = spectral_gap(&dec).unwrap();
        assert!((g.gap - (3.0f64 / 2.0).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn eigenvectors_are_orthonormal_with_small_residuals() {
        let p = SchrodingerProblem::new(1.0, 1.0, Potential::new(vec![0.0, 1.0], 0.0));
        let dec = solve_schrodinger(&p).unwrap();
        let c = dec.states.columns(0, dec.n_keep + 1);
        let gram = c.transpose() * c;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - target).abs() < 1e-10);
            }
        }
        for n in 0..=dec.n_keep {
            assert!(dec.residual(n) <= 1e-8 * dec.energies[n].abs().max(1.0));
        }
        for n in 1..dec.energies.len() {
            assert!(dec.energies[n] > dec.energies[n - 1]);
        }
    }

    #[test]
    fn harmonic_upp_is_inverse_rigidity() {
        for &(m, a) in &[(1.0, 1.0), (0.5, 2.0), (3.0, 0.7)] {
            let dec = solve_schrodinger(&harmonic(m, a)).unwrap();
            let gap = spectral_gap(&dec).unwrap().gap;
            for beta in [2.0, 4.0, 20.0] {
                let k = upp_correlator_integral(&dec, beta, m).unwrap();
                assert!((k.value - 1.0 / a).abs() < 1e-8 / a, "m={m} a={a} beta={beta} {}", k.value);
                assert!((k.value - 1.0 / (m * gap * gap)).abs() < 1e-6 / a);
            }
        }
    }

    #[test]
    fn harmonic_variance_and_matsubara_closed_forms() {
        let (m, a, beta) = (1.0, 2.0, 1.5);
        let w = (a / m as f64).sqrt();
        let dec = solve_schrodinger(&harmonic(m, a)).unwrap();
        let var = low_variance(&dec, beta).unwrap();
        let exact = 1.0 / (2.0 * m * w) / (beta * w / 2.0).tanh();
        assert!((var - exact).abs() < 1e-9);
        for i in 0..=10 {
            let tau = beta * i as f64 / 10.0;
            let g = matsubara_two_point(&dec, beta, tau).unwrap();
            let ex = (w * (beta / 2.0 - tau)).cosh() / (beta * w / 2.0).sinh() / (2.0 * m * w);
            assert!((g - ex).abs() < 1e-9, "tau={tau} {g} {ex}");
        }
        assert!(matsubara_two_point(&dec, beta, beta + 0.1).is_err());
    }

    #[test]
    fn quartic_matsubara_is_symmetric_and_decreasing() {
        let p = SchrodingerProblem::new(1.0, 1.0, Potential::new(vec![0.0, 1.0], 0.0));
        let dec = solve_schrodinger(&p).unwrap();
        let beta = 2.0;
        let vals: Vec<f64> =
            (0..=20).map(|i| matsubara_two_point(&dec, beta, beta * i as f64 / 20.0).unwrap()).collect();
        for i in 0..=20 {
            assert!(vals[i] > 0.0);
            assert!((vals[i] - vals[20 - i]).abs() < 1e-12 * vals[0]);
        }
        for i in 1..=10 {
            assert!(vals[i] < vals[i - 1]);
        }
        assert!((vals[0] - low_variance(&dec, beta).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn double_well_gap_sits_at_bottom() {
        let p = SchrodingerProblem::new(1.0, 1.0, Potential::new(vec![-2.5, 1.0], 0.0));
        let dec = solve_schrodinger(&p).unwrap();
        let g = spectral_gap(&dec).unwrap();
        assert_eq!(g.index, 1);
        assert!(!g.at_truncation_edge);
    }

    #[test]
    fn rejects_bad_problems() {
        let p = SchrodingerProblem::new(1.0, 1.0, Potential::new(vec![0.0, -1.0], 0.0));
        assert!(solve_schrodinger(&p).is_err());
        let p = harmonic(1.0, 1.0).with_n_keep(5);
        let dec = solve_schrodinger(&p).unwrap();
        assert!(spectral_gap(&dec).is_err());
        let p = harmonic(1.0, 1.0).with_grid(200, Some(1.0));
        assert!(matches!(solve_schrodinger(&p), Err(Error::Numeric(_))));
        let dec = solve_schrodinger(&harmonic(1.0, 1.0)).unwrap();
        assert!(matches!(low_variance(&dec, 1e-3), Err(Error::Truncation { .. })));
    }
}
