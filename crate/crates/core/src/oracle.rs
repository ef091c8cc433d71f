//! Exact expectations under a discrete action by tensor quadrature.
//!
//! Two engines evaluate the same finite sum:
//! * `Direct` enumerates every node assignment depth-first, carrying
//!   partial actions so each step adds one variable's terms.
//! * `Transfer` groups the variables of one slice into a state and takes
//!   the trace of the symmetric transfer matrix; it needs a boundary field
//!   that does not depend on the slice.
//!
//! Partition functions are reported relative to the free measure built
//! from the same nodes.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::DiscreteAction;
use crate::quadrature::QuadratureScheme;

/// Upper limit on the number of enumerated configurations.
pub const MAX_EVALUATIONS: f64 = 4e8;
/// Upper limit on the transfer-matrix dimension.
pub const MAX_TRANSFER_DIM: usize = 4096;

#[derive(Clone)]
pub enum Observable {
    Constant(f64),
    /// Product of `x_{site, slice}` over the listed points.
    Moment(Vec<(usize, usize)>),
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Observable::Constant(c) => write!(f, "Constant({c})"),
            Observable::Moment(m) => write!(f, "Moment({m:?})"),
            Observable::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Observable {
    pub fn moment(points: &[(usize, usize)]) -> Self {
        Observable::Moment(points.to_vec())
    }

    pub fn custom(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Observable::Custom(Arc::new(f))
    }

    fn eval(&self, x: &[f64], p: usize) -> f64 {
        match self {
            Observable::Constant(c) => *c,
            Observable::Moment(pts) => pts.iter().map(|&(l, t)| x[l * p + t]).product(),
            Observable::Custom(f) => f(x),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Engine {
    #[default]
    Auto,
    Direct,
    Transfer,
}

/// Log partition function (relative to the free measure) and expectations.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub log_partition: f64,
    pub expectations: Vec<f64>,
}

fn check_nodes(quad: &QuadratureScheme) -> Result<()> {
    if quad.is_empty() || quad.weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidParameter("quadrature weights must be positive".into()));
    }
    Ok(())
}

fn direct_cost(action: &DiscreteAction, q: usize) -> f64 {
    (q as f64).powi(action.n_dof() as i32)
}

fn transfer_dim(action: &DiscreteAction, q: usize) -> Option<usize> {
    let mut d: usize = 1;
    for _ in 0..action.n_sites() {
        d = d.checked_mul(q)?;
    }
    Some(d)
}

fn pick_engine(action: &DiscreteAction, quad: &QuadratureScheme, obs: &[Observable], engine: Engine) -> Result<Engine> {
    let q = quad.len();
    let transfer_ok = action.is_tau_homogeneous()
        && !obs.iter().any(|o| matches!(o, Observable::Custom(_)))
        && transfer_dim(action, q).is_some_and(|d| d <= MAX_TRANSFER_DIM);
    match engine {
        Engine::Direct => Ok(Engine::Direct),
        Engine::Transfer if transfer_ok => Ok(Engine::Transfer),
        Engine::Transfer => Err(Error::InvalidParameter(
            "transfer engine needs a slice-independent boundary, moment observables and a small state space"
                .into(),
        )),
        Engine::Auto => {
            let direct = direct_cost(action, q);
            if !transfer_ok {
                return Ok(Engine::Direct);
            }
            // Measured in units of one dense flop: an enumerated node tuple
            // costs about 25 of them, each transfer moment a couple of products.
            let dim = transfer_dim(action, q).unwrap_or(usize::MAX) as f64;
            let slices: usize = obs
                .iter()
                .map(|o| match o {
                    Observable::Moment(pts) => pts.len(),
                    _ => 0,
                })
                .sum();
            let transfer_flops = dim.powi(3) * (1.0 + 2.0 * slices as f64);
            let direct_flops = 25.0 * direct * (1.0 + obs.len() as f64);
            if direct > MAX_EVALUATIONS || transfer_flops < direct_flops {
                Ok(Engine::Transfer)
            } else {
                Ok(Engine::Direct)
            }
        }
    }
}

/// Expectations of several observables and the normalized log partition
/// function in one pass.
pub fn exact_expectations_with(
    action: &DiscreteAction,
    observables: &[Observable],
    quad: &QuadratureScheme,
    engine: Engine,
) -> Result<OracleResult> {
    check_nodes(quad)?;
    let engine = pick_engine(action, quad, observables, engine)?;
    let (log_z, values) = match engine {
        Engine::Transfer => transfer(action, observables, quad)?,
        _ => direct(action, observables, quad)?,
    };
    let log_free = free_log_partition(action, quad)?;
    Ok(OracleResult { log_partition: log_z - log_free, expectations: values })
}

pub fn exact_expectations(
    action: &DiscreteAction,
    observables: &[Observable],
    quad: &QuadratureScheme,
) -> Result<Vec<f64>> {
    Ok(exact_expectations_with(action, observables, quad, Engine::Auto)?.expectations)
}

pub fn exact_expectation(action: &DiscreteAction, observable: &Observable, quad: &QuadratureScheme) -> Result<f64> {
    Ok(exact_expectations(action, std::slice::from_ref(observable), quad)?[0])
}

/// `log Z`, normalized so that the free action gives 0.
pub fn exact_log_partition(action: &DiscreteAction, quad: &QuadratureScheme) -> Result<f64> {
    Ok(exact_expectations_with(action, &[], quad, Engine::Auto)?.log_partition)
}

/// `Z`, normalized so that the free action gives 1.
pub fn exact_partition(action: &DiscreteAction, quad: &QuadratureScheme) -> Result<f64> {
    let lz = exact_log_partition(action, quad)?;
    let z = lz.exp();
    if !z.is_finite() || z <= 0.0 {
        return Err(Error::Numeric(format!("partition function exp({lz}) is not representable")));
    }
    Ok(z)
}

/// The free measure factorizes over sites; one site is a `q x q` trace.
fn free_log_partition(action: &DiscreteAction, quad: &QuadratureScheme) -> Result<f64> {
    let mut single = action.free();
    single.sites.truncate(1);
    single.potentials.truncate(1);
    single.boundary_field.truncate(1);
    let (lz, _) = transfer(&single, &[], quad)?;
    Ok(lz * action.n_sites() as f64)
}

enum Link {
    Kinetic(usize, f64),
    Product(usize, f64),
}

fn direct(action: &DiscreteAction, observables: &[Observable], quad: &QuadratureScheme) -> Result<(f64, Vec<f64>)> {
    let q = quad.len();
    let n = action.n_dof();
    let cost = direct_cost(action, q);
    if cost > MAX_EVALUATIONS {
        return Err(Error::TooLarge {
            what: format!("direct enumeration of {n} variables with {q} nodes"),
            required: cost,
            limit: MAX_EVALUATIONS,
        });
    }
    let p = action.p;
    let x = &quad.nodes;
    let log_w: Vec<f64> = quad.weights.iter().map(|w| w.ln()).collect();

    let single: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let (l, t) = (k / p, k % p);
            (0..q).map(|a| action.single(l, t, x[a]) - log_w[a]).collect()
        })
        .collect();
    let kin = action.kinetic();
    let kin_table: Vec<f64> = (0..q * q).map(|ab| kin * (x[ab / q] - x[ab % q]).powi(2)).collect();
    let prod_table: Vec<f64> = (0..q * q).map(|ab| x[ab / q] * x[ab % q]).collect();

    let mut links: Vec<Vec<Link>> = (0..n).map(|_| Vec::new()).collect();
    for l in 0..action.n_sites() {
        for t in 1..p {
            let k = l * p + t;
            let weight = if p == 2 { 2.0 } else { 1.0 };
            links[k].push(Link::Kinetic(k - 1, weight));
            if t == p - 1 && p > 2 {
                links[k].push(Link::Kinetic(l * p, 1.0));
            }
        }
    }
    for b in &action.bonds {
        let (lo, hi) = (b.i.min(b.j), b.i.max(b.j));
        for t in 0..p {
            links[hi * p + t].push(Link::Product(lo * p + t, -action.epsilon * b.coupling));
        }
    }

    // Shift by the best constant path to keep the exponentials in range.
    let shift = (0..q)
        .map(|a| action.eval(&vec![x[a]; n]) - n as f64 * log_w[a])
        .fold(f64::INFINITY, f64::min);

    let n_obs = observables.len();
    let partials: Vec<(f64, Vec<f64>)> = (0..q)
        .into_par_iter()
        .map(|first| {
            let mut choice = vec![0usize; n];
            let mut energy = vec![0.0; n + 1];
            let mut cfg = vec![0.0; n];
            let mut z = 0.0;
            let mut acc = vec![0.0; n_obs];
            choice[0] = first;
            cfg[0] = x[first];
            energy[1] = single[0][first];
            if n == 1 {
                let w = (-(energy[1] - shift)).exp();
                z += w;
                for (o, a) in observables.iter().zip(acc.iter_mut()) {
                    *a += w * o.eval(&cfg, p);
                }
                return (z, acc);
            }
            let mut depth = 1usize;
            choice[1] = 0;
            loop {
                let k = depth;
                let a = choice[k];
                let mut e = energy[k] + single[k][a];
                for link in &links[k] {
                    e += match *link {
                        Link::Kinetic(j, c) => c * kin_table[a * q + choice[j]],
                        Link::Product(j, c) => c * prod_table[a * q + choice[j]],
                    };
                }
                cfg[k] = x[a];
                if k + 1 == n {
                    let w = (-(e - shift)).exp();
                    z += w;
                    for (o, s) in observables.iter().zip(acc.iter_mut()) {
                        *s += w * o.eval(&cfg, p);
                    }
                    // advance
                    let mut d = k;
                    loop {
                        choice[d] += 1;
                        if choice[d] < q {
                            break;
                        }
                        choice[d] = 0;
                        d -= 1;
                        if d == 0 {
                            return (z, acc);
                        }
                    }
                    depth = d;
                } else {
                    energy[k + 1] = e;
                    depth = k + 1;
                    choice[depth] = 0;
                }
            }
        })
        .collect();
    let mut z = 0.0;
    let mut acc = vec![0.0; n_obs];
    for (pz, pa) in &partials {
        z += pz;
        for (a, b) in acc.iter_mut().zip(pa) {
            *a += b;
        }
    }
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Numeric(format!("enumerated partition sum is {z}")));
    }
    Ok((z.ln() - shift, acc.into_iter().map(|a| a / z).collect()))
}

/// Symmetric slice-to-slice transfer matrix over node tuples, with the
/// quadrature weights folded in and `exp(-offset)` taken out of every
/// on-slice factor.
pub(crate) struct TransferMatrix {
    pub matrix: DMatrix<f64>,
    pub states: Vec<Vec<usize>>,
    pub offset: f64,
}

pub(crate) fn transfer_matrix(action: &DiscreteAction, quad: &QuadratureScheme) -> Result<TransferMatrix> {
    check_nodes(quad)?;
    if !action.is_tau_homogeneous() {
        return Err(Error::InvalidParameter("transfer engine needs a slice-independent boundary field".into()));
    }
    let q = quad.len();
    let ns = action.n_sites();
    let dim = transfer_dim(action, q).filter(|&d| d <= MAX_TRANSFER_DIM).ok_or(Error::TooLarge {
        what: format!("transfer matrix for {ns} sites with {q} nodes"),
        required: (q as f64).powi(ns as i32),
        limit: MAX_TRANSFER_DIM as f64,
    })?;
    let x = &quad.nodes;
    let log_w: Vec<f64> = quad.weights.iter().map(|w| w.ln()).collect();
    let digits = |s: usize| -> Vec<usize> {
        let mut out = vec![0; ns];
        let mut r = s;
        for l in (0..ns).rev() {
            out[l] = r % q;
            r /= q;
        }
        out
    };
    let states: Vec<Vec<usize>> = (0..dim).map(digits).collect();
    let u: Vec<f64> = states
        .iter()
        .map(|st| {
            let mut e = 0.0;
            for (l, &a) in st.iter().enumerate() {
                e += action.single(l, 0, x[a]) - log_w[a];
            }
            for b in &action.bonds {
                e -= action.epsilon * b.coupling * x[st[b.i]] * x[st[b.j]];
            }
            e
        })
        .collect();
    let u0 = u.iter().cloned().fold(f64::INFINITY, f64::min);
    let kin = action.kinetic();
    let mut t = DMatrix::<f64>::zeros(dim, dim);
    for s in 0..dim {
        for r in s..dim {
            let k: f64 = states[s].iter().zip(&states[r]).map(|(&a, &b)| (x[a] - x[b]).powi(2)).sum::<f64>() * kin;
            let v = (-0.5 * (u[s] - u0) - 0.5 * (u[r] - u0) - k).exp();
            t[(s, r)] = v;
            t[(r, s)] = v;
        }
    }
    Ok(TransferMatrix { matrix: t, states, offset: u0 })
}

fn transfer(action: &DiscreteAction, observables: &[Observable], quad: &QuadratureScheme) -> Result<(f64, Vec<f64>)> {
    let TransferMatrix { matrix: t, states, offset: u0 } = transfer_matrix(action, quad)?;
    let dim = states.len();
    let ns = action.n_sites();
    let p = action.p;
    let x = &quad.nodes;
    let eig = SymmetricEigen::new(t);
    let lmax = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lmax > 0.0) {
        return Err(Error::Numeric("transfer matrix has no positive eigenvalue".into()));
    }
    let lam: Vec<f64> = eig.eigenvalues.iter().map(|l| l / lmax).collect();
    let pw = |g: usize| DVector::from_iterator(dim, lam.iter().map(|l| l.powi(g as i32)));
    let z_rel: f64 = lam.iter().map(|l| l.powi(p as i32)).sum();
    if !(z_rel > 0.0) {
        return Err(Error::Numeric("transfer trace is not positive".into()));
    }
    let log_z = -(p as f64) * u0 + p as f64 * lmax.ln() + z_rel.ln();

    let v = &eig.eigenvectors;
    let mut values = Vec::with_capacity(observables.len());
    for obs in observables {
        let value = match obs {
            Observable::Constant(c) => *c,
            Observable::Custom(_) => {
                return Err(Error::InvalidParameter("transfer engine handles moment observables only".into()))
            }
            Observable::Moment(pts) if pts.is_empty() => 1.0,
            Observable::Moment(pts) => {
                let mut slices: Vec<usize> = pts.iter().map(|&(_, t)| t).collect();
                slices.sort_unstable();
                slices.dedup();
                for &(l, t) in pts {
                    if l >= ns || t >= p {
                        return Err(Error::InvalidParameter(format!("moment point ({l}, {t}) out of range")));
                    }
                }
                // tr(M_1 L^{g_1} M_2 L^{g_2} ... ) in the eigenbasis.
                let mut prod = DMatrix::<f64>::identity(dim, dim);
                for (i, &tau) in slices.iter().enumerate() {
                    let diag = DVector::from_iterator(
                        dim,
                        states.iter().map(|st| {
                            pts.iter().filter(|&&(_, tt)| tt == tau).map(|&(l, _)| x[st[l]]).product::<f64>()
                        }),
                    );
                    let mut scaled = v.clone();
                    for (r, d) in diag.iter().enumerate() {
                        scaled.row_mut(r).scale_mut(*d);
                    }
                    let m = v.transpose() * scaled;
                    let next = if i + 1 < slices.len() { slices[i + 1] } else { slices[0] + p };
                    let gap = pw(next - tau);
                    let mut ml = m;
                    for (c, g) in gap.iter().enumerate() {
                        ml.column_mut(c).scale_mut(*g);
                    }
                    prod *= ml;
                }
                prod.trace() / z_rel
            }
        };
        values.push(value);
    }
    Ok((log_z, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_action, Boundary, ExternalConfiguration, LatticeBox};
    use crate::model::{DynamicalMatrix, ModelSpec, Potential};

    fn action(n: usize, p: usize, j: f64, coeffs: Vec<f64>, h: f64) -> DiscreteAction {
        let spec = ModelSpec::uniform(1, 1.0, 1.0, 1.0, Potential::new(coeffs, h), DynamicalMatrix::NearestNeighbor { j });
        build_action(&spec, &LatticeBox::line(n, Boundary::Zero).unwrap(), p).unwrap()
    }

    #[test]
    fn free_measure_normalizes_to_one() {
        let a = action(2, 3, 0.0, vec![], 0.0);
        let quad = QuadratureScheme::trapezoid(12, 5.0).unwrap();
        let z = exact_expectations_with(&a, &[], &quad, Engine::Direct).unwrap().log_partition;
        assert!(z.abs() < 1e-12, "{z}");
        let z = exact_expectations_with(&a, &[], &quad, Engine::Transfer).unwrap().log_partition;
        assert!(z.abs() < 1e-12, "{z}");
    }

    #[test]
    fn engines_agree() {
        let a = action(2, 4, 0.4, vec![-0.5, 0.5], 0.2);
        let quad = QuadratureScheme::trapezoid(9, 3.5).unwrap();
        let obs = vec![
            Observable::moment(&[(0, 0)]),
            Observable::moment(&[(0, 0), (1, 2)]),
            Observable::moment(&[(0, 1), (0, 1), (1, 3), (0, 0)]),
            Observable::Constant(2.5),
        ];
        let d = exact_expectations_with(&a, &obs, &quad, Engine::Direct).unwrap();
        let t = exact_expectations_with(&a, &obs, &quad, Engine::Transfer).unwrap();
        assert!((d.log_partition - t.log_partition).abs() < 1e-11);
        for (u, v) in d.expectations.iter().zip(&t.expectations) {
            assert!((u - v).abs() < 1e-11, "{u} {v}");
        }
        assert!((d.expectations[3] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn direct_matches_naive_sum() {
        let a = action(1, 4, 0.0, vec![0.0, 1.0], 0.0);
        let quad = QuadratureScheme::trapezoid(7, 3.0).unwrap();
        let x = &quad.nodes;
        let h = quad.weights[0];
        let mut z = 0.0;
        let mut m2 = 0.0;
        for i in 0..7usize.pow(4) {
            let c: Vec<f64> = (0..4).map(|k| x[(i / 7usize.pow(k)) % 7]).collect();
            let w = (-a.eval(&c)).exp() * h.powi(4);
            z += w;
            m2 += w * c[2] * c[2];
        }
        let free = a.free();
        let mut zf = 0.0;
        for i in 0..7usize.pow(4) {
            let c: Vec<f64> = (0..4).map(|k| x[(i / 7usize.pow(k)) % 7]).collect();
            zf += (-free.eval(&c)).exp() * h.powi(4);
        }
        let r = exact_expectations_with(&a, &[Observable::moment(&[(0, 2), (0, 2)])], &quad, Engine::Direct).unwrap();
        assert!((r.log_partition - (z / zf).ln()).abs() < 1e-12);
        assert!((r.expectations[0] - m2 / z).abs() < 1e-12);
    }

    #[test]
    fn symmetry_properties() {
        let a = action(2, 3, 0.5, vec![-1.0, 0.5], 0.0);
        let quad = QuadratureScheme::trapezoid(10, 3.5).unwrap();
        let odd = exact_expectation(&a, &Observable::moment(&[(0, 1)]), &quad).unwrap();
        assert!(odd.abs() < 1e-13);
        let spec = ModelSpec::uniform(1, 1.0, 1.0, 1.0, Potential::new(vec![-1.0, 0.5], 0.0), DynamicalMatrix::NearestNeighbor { j: 0.5 });
        let zs: Vec<f64> = [0.8, -0.8]
            .iter()
            .map(|&v| {
                let xi = ExternalConfiguration::constant(&[(vec![-1], v), (vec![2], 0.3 * v)]);
                let b = LatticeBox::line(2, Boundary::External { xi }).unwrap();
                exact_partition(&build_action(&spec, &b, 3).unwrap(), &quad).unwrap()
            })
            .collect();
        assert!((zs[0] - zs[1]).abs() < 1e-12 * zs[0]);
    }

    #[test]
    fn relabeling_sites_leaves_expectations_unchanged() {
        let mut a = action(3, 2, 0.3, vec![0.0, 1.0], 0.1);
        a.potentials[2] = Potential::new(vec![-0.5, 1.0], 0.4);
        let quad = QuadratureScheme::trapezoid(7, 3.0).unwrap();
        let perm = [2usize, 0, 1];
        let b = a.permuted(&perm);
        for site in 0..3 {
            let new = perm.iter().position(|&o| o == site).unwrap();
            let u = exact_expectation(&a, &Observable::moment(&[(site, 0), (site, 1)]), &quad).unwrap();
            let v = exact_expectation(&b, &Observable::moment(&[(new, 0), (new, 1)]), &quad).unwrap();
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn size_guard() {
        let a = action(3, 4, 0.3, vec![0.0, 1.0], 0.0);
        let quad = QuadratureScheme::trapezoid(20, 3.0).unwrap();
        let err = exact_expectations_with(&a, &[Observable::custom(|x| x[0])], &quad, Engine::Auto);
        assert!(matches!(err, Err(Error::TooLarge { .. })));
    }
}
