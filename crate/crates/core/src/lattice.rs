//! Finite boxes and the time-sliced action of the loop measure.
//!
//! A configuration is a flat vector indexed by `site * P + slice`. The
//! action is
//!
//! ```text
//! S(x) = sum_{l,t} [ m (x_{l,t+1} - x_{l,t})^2 / (2 eps) + eps (a/2) x_{l,t}^2 + eps V_l(x_{l,t}) ]
//!        - eps sum_{pairs} J_{ll'} x_{l,t} x_{l',t} - eps sum_{l,t} f_{l,t} x_{l,t}
//! ```
//!
//! with periodic slice index and `f` the field exerted by the boundary
//! configuration.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::model::{parse_site_key, site_key, ModelSpec, Potential, Site};

/// Boundary configuration outside the box, keyed by site (`"i,j,k"`).
/// A single value is constant in imaginary time; otherwise one value per
/// slice.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ExternalConfiguration {
    pub values: BTreeMap<String, Vec<f64>>,
}

impl ExternalConfiguration {
    pub fn constant(entries: &[(Site, f64)]) -> Self {
        Self {
            values: entries.iter().map(|(s, v)| (site_key(s), vec![*v])).collect(),
        }
    }

    fn at(&self, site: &[i64], slice: usize, p: usize) -> Result<Option<f64>> {
        match self.values.get(&site_key(site)) {
            None => Ok(None),
            Some(v) if v.len() == 1 => Ok(Some(v[0])),
            Some(v) if v.len() == p => Ok(Some(v[slice])),
            Some(v) => Err(Error::InvalidParameter(format!(
                "boundary path at {} has {} values, expected 1 or {p}",
                site_key(site),
                v.len()
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Boundary {
    Zero,
    External { xi: ExternalConfiguration },
    PeriodicTorus,
}

/// Rectangular box `lower[k] <= l_k <= upper[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LatticeBox {
    pub lower: Vec<i64>,
    pub upper: Vec<i64>,
    pub boundary: Boundary,
}

impl LatticeBox {
    pub fn new(lower: Vec<i64>, upper: Vec<i64>, boundary: Boundary) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidParameter("box corners must share a positive dimension".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::InvalidParameter(format!("empty box {lower:?}..{upper:?}")));
        }
        Ok(Self { lower, upper, boundary })
    }

    /// `(-L, L]^d` with periodic boundary.
    pub fn torus(d: usize, l: i64) -> Result<Self> {
        if l < 1 {
            return Err(Error::InvalidParameter(format!("torus half-size L must be >= 1, got {l}")));
        }
        Self::new(vec![-l + 1; d], vec![l; d], Boundary::PeriodicTorus)
    }

    /// A line of `n` sites starting at the origin.
    pub fn line(n: usize, boundary: Boundary) -> Result<Self> {
        Self::new(vec![0], vec![n as i64 - 1], boundary)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn extents(&self) -> Vec<i64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.extents().iter().product::<i64>() as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Sites in row-major order (last coordinate fastest).
    pub fn sites(&self) -> Vec<Site> {
        let ext = self.extents();
        (0..self.len())
            .map(|mut flat| {
                let mut s = vec![0; self.dim()];
                for k in (0..self.dim()).rev() {
                    s[k] = self.lower[k] + (flat as i64 % ext[k]);
                    flat /= ext[k] as usize;
                }
                s
            })
            .collect()
    }

    pub fn index_of(&self, site: &[i64]) -> Option<usize> {
        if site.len() != self.dim() {
            return None;
        }
        let ext = self.extents();
        let mut idx = 0usize;
        for k in 0..self.dim() {
            let c = site[k] - self.lower[k];
            if c < 0 || c >= ext[k] {
                return None;
            }
            idx = idx * ext[k] as usize + c as usize;
        }
        Some(idx)
    }

    /// Reduce a site into the box along every periodic axis.
    pub fn wrap(&self, site: &[i64]) -> Site {
        let ext = self.extents();
        site.iter()
            .enumerate()
            .map(|(k, &c)| self.lower[k] + (c - self.lower[k]).rem_euclid(ext[k]))
            .collect()
    }

    /// Torus distance `|l - l'|_Lambda`.
    pub fn torus_distance(&self, a: &[i64], b: &[i64]) -> f64 {
        let ext = self.extents();
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(k, (x, y))| {
                let r = (x - y).rem_euclid(ext[k]);
                let r = r.min(ext[k] - r) as f64;
                r * r
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Pair coupling `-eps J x_i x_j` on every slice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub coupling: f64,
}

/// Time-sliced action of a finite box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteAction {
    pub p: usize,
    pub beta: f64,
    pub epsilon: f64,
    pub mass: f64,
    pub rigidity: f64,
    pub sites: Vec<Site>,
    pub potentials: Vec<Potential>,
    pub bonds: Vec<Bond>,
    /// `boundary_field[site][slice]`, the linear coefficient from the
    /// boundary configuration.
    pub boundary_field: Vec<Vec<f64>>,
    pub periodic: bool,
}

impl DiscreteAction {
    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn n_dof(&self) -> usize {
        self.sites.len() * self.p
    }

    pub fn dof(&self, site: usize, slice: usize) -> usize {
        site * self.p + slice
    }

    /// Kinetic prefactor `m / (2 eps)`.
    pub fn kinetic(&self) -> f64 {
        self.mass / (2.0 * self.epsilon)
    }

    /// Every on-slice term that depends only on `x_{l,t}`.
    pub fn single(&self, site: usize, slice: usize, x: f64) -> f64 {
        self.epsilon
            * (0.5 * self.rigidity * x * x + self.potentials[site].eval(x)
                - self.boundary_field[site][slice] * x)
    }

    /// Full action.
    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n_dof());
        let p = self.p;
        let k = self.kinetic();
        let mut s = 0.0;
        for l in 0..self.n_sites() {
            for t in 0..p {
                let a = x[l * p + t];
                let b = x[l * p + (t + 1) % p];
                s += k * (b - a) * (b - a) + self.single(l, t, a);
            }
        }
        for bond in &self.bonds {
            for t in 0..p {
                s -= self.epsilon * bond.coupling * x[bond.i * p + t] * x[bond.j * p + t];
            }
        }
        s
    }

    /// Couplings of site `l` as `(other, J)` pairs.
    pub fn neighbors(&self) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); self.n_sites()];
        for b in &self.bonds {
            out[b.i].push((b.j, b.coupling));
            out[b.j].push((b.i, b.coupling));
        }
        out
    }

    pub fn is_ferromagnetic(&self) -> bool {
        self.bonds.iter().all(|b| b.coupling >= 0.0)
    }

    /// Whether the boundary field is the same on every slice.
    pub fn is_tau_homogeneous(&self) -> bool {
        self.boundary_field.iter().all(|f| f.iter().all(|&v| v == f[0]))
    }

    pub fn all_potentials_even(&self) -> bool {
        self.potentials.iter().all(|p| p.is_even())
    }

    /// Same action with the external field `h` on every site.
    pub fn with_uniform_field(&self, h: f64) -> Self {
        let mut out = self.clone();
        for p in &mut out.potentials {
            p.field = h;
        }
        out
    }

    /// The free part: same kinetic and harmonic terms, no `V`, `J` or boundary.
    pub fn free(&self) -> Self {
        let mut out = self.clone();
        for p in &mut out.potentials {
            *p = Potential::zero();
        }
        out.bonds.clear();
        for f in &mut out.boundary_field {
            f.iter_mut().for_each(|v| *v = 0.0);
        }
        out
    }

    /// Relabel sites by `perm[new] = old`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut out = self.clone();
        out.sites = perm.iter().map(|&o| self.sites[o].clone()).collect();
        out.potentials = perm.iter().map(|&o| self.potentials[o].clone()).collect();
        out.boundary_field = perm.iter().map(|&o| self.boundary_field[o].clone()).collect();
        out.bonds = self
            .bonds
            .iter()
            .map(|b| {
                let (i, j) = (inv[b.i], inv[b.j]);
                Bond { i: i.min(j), j: i.max(j), coupling: b.coupling }
            })
            .collect();
        out
    }
}

fn check_slices(p: usize) -> Result<()> {
    if p < 2 {
        return Err(Error::InvalidParameter(format!(
            "at least 2 time slices are needed, got P = {p}"
        )));
    }
    Ok(())
}

/// Discretize the box kernel with `p` slices.
pub fn build_action(spec: &ModelSpec, lattice_box: &LatticeBox, p: usize) -> Result<DiscreteAction> {
    spec.check_well_formed()?;
    check_slices(p)?;
    if lattice_box.dim() != spec.d {
        return Err(Error::InvalidParameter(format!(
            "box has dimension {} but the model has d = {}",
            lattice_box.dim(),
            spec.d
        )));
    }
    let sites = lattice_box.sites();
    let n = sites.len();
    let potentials: Vec<Potential> = sites.iter().map(|s| spec.potentials.at(s).clone()).collect();
    let mut pair: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut boundary_field = vec![vec![0.0; p]; n];
    let offsets = spec.couplings.finite_offsets(spec.d);

    match (&lattice_box.boundary, &offsets) {
        (Boundary::PeriodicTorus, None) => {
            return Err(Error::InvalidParameter(
                "periodic boxes need finite-range couplings".into(),
            ))
        }
        (Boundary::External { xi }, None) if !xi.values.is_empty() => {
            return Err(Error::InvalidParameter(
                "a boundary configuration needs finite-range couplings; infinite-range couplings escape any finite neighbourhood"
                    .into(),
            ))
        }
        _ => {}
    }

    match offsets {
        Some(offsets) => {
            for (i, s) in sites.iter().enumerate() {
                for (o, v) in &offsets {
                    let target: Site = s.iter().zip(o).map(|(a, b)| a + b).collect();
                    let (target, inside) = match lattice_box.boundary {
                        Boundary::PeriodicTorus => (lattice_box.wrap(&target), true),
                        _ => {
                            let inside = lattice_box.index_of(&target).is_some();
                            (target, inside)
                        }
                    };
                    if inside {
                        let j = lattice_box.index_of(&target).expect("inside");
                        if j == i {
                            return Err(Error::InvalidParameter(format!(
                                "torus too small: offset {o:?} wraps onto its own site"
                            )));
                        }
                        *pair.entry((i.min(j), i.max(j))).or_default() += 0.5 * v;
                    } else if let Boundary::External { xi } = &lattice_box.boundary {
                        for t in 0..p {
                            match xi.at(&target, t, p)? {
                                Some(val) => boundary_field[i][t] += v * val,
                                None => {
                                    return Err(Error::InvalidParameter(format!(
                                        "coupling from {} reaches {} where no boundary value is given",
                                        site_key(s),
                                        site_key(&target)
                                    )))
                                }
                            }
                        }
                    }
                }
            }
        }
        None => {
            for i in 0..n {
                for j in i + 1..n {
                    let v = spec.couplings.entry(&sites[i], &sites[j]);
                    if v != 0.0 {
                        pair.insert((i, j), v);
                    }
                }
            }
        }
    }
    if let Boundary::External { xi } = &lattice_box.boundary {
        for key in xi.values.keys() {
            let s = parse_site_key(key)?;
            if lattice_box.index_of(&s).is_some() {
                return Err(Error::InvalidParameter(format!(
                    "boundary configuration given at interior site {key}"
                )));
            }
        }
    }
    let bonds = pair
        .into_iter()
        .filter(|(_, c)| *c != 0.0)
        .map(|((i, j), coupling)| Bond { i, j, coupling })
        .collect();
    let epsilon = spec.beta / p as f64;
    Ok(DiscreteAction {
        p,
        beta: spec.beta,
        epsilon,
        mass: spec.mass,
        rigidity: spec.rigidity,
        sites,
        potentials,
        bonds,
        boundary_field,
        periodic: matches!(lattice_box.boundary, Boundary::PeriodicTorus),
    })
}

/// Torus action on `(-L, L]^d` for a translation-invariant nearest-neighbour model.
pub fn build_periodic_action(spec: &ModelSpec, l: i64, p: usize) -> Result<DiscreteAction> {
    if !spec.potentials.is_translation_invariant() {
        return Err(Error::InvalidParameter("periodic kernels need a translation-invariant model".into()));
    }
    if !matches!(spec.couplings, crate::model::DynamicalMatrix::NearestNeighbor { .. }) {
        return Err(Error::InvalidParameter("periodic kernels need nearest-neighbour couplings".into()));
    }
    build_action(spec, &LatticeBox::torus(spec.d, l)?, p)
}

/// Precision matrix `Q` of the free slice measure, `exp(-x.Q.x / 2)`.
pub fn free_precision(m: f64, a: f64, beta: f64, p: usize) -> Result<DMatrix<f64>> {
    ensure_positive("mass", m)?;
    ensure_positive("rigidity", a)?;
    ensure_positive("beta", beta)?;
    check_slices(p)?;
    let eps = beta / p as f64;
    let k = m / eps;
    let mut q = DMatrix::<f64>::zeros(p, p);
    for t in 0..p {
        let u = (t + 1) % p;
        q[(t, t)] += k + eps * a;
        q[(u, u)] += k;
        q[(t, u)] -= k;
        q[(u, t)] -= k;
    }
    Ok(q)
}

/// Covariance `<x_t x_s>` of the free slice measure.
pub fn free_covariance(m: f64, a: f64, beta: f64, p: usize) -> Result<DMatrix<f64>> {
    free_precision(m, a, beta, p)?
        .try_inverse()
        .ok_or_else(|| Error::Numeric("free precision matrix is singular".into()))
}

/// Variances of the discrete Fourier modes, `1 / (m (2 sin(pi k / P) / eps)^2 + a)`,
/// the discrete counterpart of `1 / (m (2 pi k / beta)^2 + a)`.
pub fn free_mode_variances(m: f64, a: f64, beta: f64, p: usize) -> Result<Vec<f64>> {
    free_precision(m, a, beta, p)?;
    let eps = beta / p as f64;
    Ok((0..p)
        .map(|k| {
            let s = 2.0 * (std::f64::consts::PI * k as f64 / p as f64).sin() / eps;
            1.0 / (m * s * s + a)
        })
        .collect())
}
