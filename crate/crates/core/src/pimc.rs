//! Metropolis sampling of the time-sliced loop measure.
//!
//! Each chain owns its configuration and a ChaCha8 stream selected by the
//! chain index, so chains can run on any thread and merge in index order.
//! Error bars come from the spread between chains; nonlinear estimators
//! (connected correlators, Ursell functions) use a leave-one-chain-out
//! jackknife.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Boundary, DiscreteAction, LatticeBox};

pub const MIN_CHAINS: usize = 8;
pub const TARGET_ACCEPTANCE: f64 = 0.4;
const BATCHES: usize = 32;
const ADAPT_EVERY: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct McParams {
    pub n_sweeps: usize,
    pub n_burnin: usize,
    pub n_chains: usize,
    pub master_seed: u64,
    /// Initial half-width of single-slice proposals; adapted during burn-in.
    pub proposal_width: f64,
    /// Fraction of updates that move one slice; the rest shift a whole loop.
    pub update_mix: f64,
}

impl Default for McParams {
    fn default() -> Self {
        Self {
            n_sweeps: 20_000,
            n_burnin: 2_000,
            n_chains: MIN_CHAINS,
            master_seed: 0,
            proposal_width: 0.5,
            update_mix: 0.8,
        }
    }
}

impl McParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains < MIN_CHAINS {
            return Err(Error::InvalidParameter(format!(
                "at least {MIN_CHAINS} chains are needed for error bars, got {}",
                self.n_chains
            )));
        }
        if self.n_sweeps < BATCHES {
            return Err(Error::InvalidParameter(format!(
                "need at least {BATCHES} measured sweeps, got {}",
                self.n_sweeps
            )));
        }
        if !(self.proposal_width > 0.0 && self.proposal_width.is_finite()) {
            return Err(Error::InvalidParameter("proposal width must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.update_mix) {
            return Err(Error::InvalidParameter(format!("update mix {} not in [0, 1]", self.update_mix)));
        }
        Ok(())
    }
}

/// Quantities recorded after every measured sweep.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Probe {
    /// Product of `x_{site, slice}` over the listed points.
    Moment { points: Vec<(usize, usize)> },
    /// `(|Lambda|^{-1} sum_l x_{l,t})^2` averaged over slices `t`.
    BlockMagnetizationSquared,
}

impl Probe {
    pub fn moment(points: &[(usize, usize)]) -> Self {
        let mut points = points.to_vec();
        points.sort_unstable();
        Probe::Moment { points }
    }

    fn normalized(&self) -> Self {
        match self {
            Probe::Moment { points } => Probe::moment(points),
            other => other.clone(),
        }
    }

    fn eval(&self, x: &[f64], n_sites: usize, p: usize) -> f64 {
        match self {
            Probe::Moment { points } => points.iter().map(|&(l, t)| x[l * p + t]).product(),
            Probe::BlockMagnetizationSquared => {
                let mut acc = 0.0;
                for t in 0..p {
                    let m: f64 = (0..n_sites).map(|l| x[l * p + t]).sum::<f64>() / n_sites as f64;
                    acc += m * m;
                }
                acc / p as f64
            }
        }
    }
}

/// Every moment needed for the connected two-point functions and Ursell
/// function of the given points: all nonempty sub-products up to order 4.
pub fn correlation_probes(points: &[(usize, usize)]) -> Vec<Probe> {
    let n = points.len();
    let mut out: Vec<Probe> = Vec::new();
    for mask in 1u32..(1 << n) {
        if mask.count_ones() > 4 {
            continue;
        }
        let pts: Vec<_> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| points[i]).collect();
        let probe = Probe::moment(&pts);
        if !out.contains(&probe) {
            out.push(probe);
        }
    }
    out
}

/// Summary of one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ChainSummary {
    pub chain: u64,
    pub n_samples: usize,
    pub sums: Vec<f64>,
    pub sums_sq: Vec<f64>,
    /// Means over `BATCHES` consecutive blocks of sweeps, per probe.
    pub batch_means: Vec<Vec<f64>>,
    pub acceptance_single: f64,
    pub acceptance_shift: f64,
    pub single_width: f64,
    pub shift_width: f64,
}

impl ChainSummary {
    pub fn mean(&self, k: usize) -> f64 {
        self.sums[k] / self.n_samples as f64
    }

    /// Effective sample size from the variance of batch means,
    /// `n var(x) / (b var(batch mean))`, capped at `n`.
    pub fn effective_samples(&self, k: usize) -> f64 {
        let n = self.n_samples as f64;
        let mean = self.mean(k);
        let var = (self.sums_sq[k] / n - mean * mean).max(0.0);
        let bm = &self.batch_means[k];
        let nb = bm.len() as f64;
        if var == 0.0 || nb < 2.0 {
            return n;
        }
        let bmean = bm.iter().sum::<f64>() / nb;
        let bvar = bm.iter().map(|v| (v - bmean).powi(2)).sum::<f64>() / (nb - 1.0);
        let b = n / nb;
        let tau = (b * bvar / var).max(1.0);
        n / tau
    }
}

/// Statistics of a set of chains sharing the same probes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ChainStats {
    pub probes: Vec<Probe>,
    pub chains: Vec<ChainSummary>,
}

/// A Monte Carlo estimate and its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Measurement {
    pub value: f64,
    pub error: f64,
}

impl Measurement {
    /// Number of combined standard errors separating two estimates.
    pub fn sigmas_from(&self, other: &Measurement) -> f64 {
        let e = self.error.hypot(other.error);
        if e == 0.0 {
            if self.value == other.value { 0.0 } else { f64::INFINITY }
        } else {
            (self.value - other.value).abs() / e
        }
    }

    /// Distance to an exact value in units of this estimate's error.
    pub fn sigmas_to(&self, exact: f64) -> f64 {
        self.sigmas_from(&Measurement { value: exact, error: 0.0 })
    }
}

impl ChainStats {
    /// Union of two disjoint chain sets, ordered by chain index.
    pub fn merge(&self, other: &ChainStats) -> Result<ChainStats> {
        if self.probes != other.probes {
            return Err(Error::InvalidParameter("cannot merge chains recording different probes".into()));
        }
        let mut chains = self.chains.clone();
        for c in &other.chains {
            if chains.iter().any(|d| d.chain == c.chain) {
                return Err(Error::InvalidParameter(format!("chain {} appears twice", c.chain)));
            }
            chains.push(c.clone());
        }
        chains.sort_by_key(|c| c.chain);
        Ok(ChainStats { probes: self.probes.clone(), chains })
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn index_of(&self, probe: &Probe) -> Result<usize> {
        let probe = probe.normalized();
        self.probes
            .iter()
            .position(|p| *p == probe)
            .ok_or_else(|| Error::MissingObservable(format!("{probe:?}")))
    }

    fn check_chains(&self) -> Result<()> {
        if self.chains.len() < MIN_CHAINS {
            return Err(Error::Diagnostic(format!(
                "error bars need at least {MIN_CHAINS} chains, have {}",
                self.chains.len()
            )));
        }
        Ok(())
    }

    /// Leave-one-chain-out jackknife of `f` applied to the pooled means of
    /// the listed probes. Chains are weighted by their sample counts.
    pub fn jackknife(&self, probes: &[Probe], f: impl Fn(&[f64]) -> f64) -> Result<Measurement> {
        self.check_chains()?;
        let idx: Vec<usize> = probes.iter().map(|p| self.index_of(p)).collect::<Result<_>>()?;
        let total_n: usize = self.chains.iter().map(|c| c.n_samples).sum();
        let total: Vec<f64> = idx.iter().map(|&k| self.chains.iter().map(|c| c.sums[k]).sum()).collect();
        let full: Vec<f64> = total.iter().map(|s| s / total_n as f64).collect();
        let value = f(&full);
        let n = self.chains.len() as f64;
        let leave: Vec<f64> = self
            .chains
            .iter()
            .map(|c| {
                let m = (total_n - c.n_samples) as f64;
                let means: Vec<f64> = idx.iter().zip(&total).map(|(&k, s)| (s - c.sums[k]) / m).collect();
                f(&means)
            })
            .collect();
        let avg = leave.iter().sum::<f64>() / n;
        let var = leave.iter().map(|v| (v - avg).powi(2)).sum::<f64>() * (n - 1.0) / n;
        Ok(Measurement { value, error: var.sqrt() })
    }

    pub fn mean(&self, probe: &Probe) -> Result<Measurement> {
        self.jackknife(std::slice::from_ref(probe), |m| m[0])
    }

    /// Total effective sample size of one probe over all chains.
    pub fn effective_samples(&self, probe: &Probe) -> Result<f64> {
        let k = self.index_of(probe)?;
        Ok(self.chains.iter().map(|c| c.effective_samples(k)).sum())
    }

    /// Acceptance rates `(single slice, loop shift)` averaged over chains.
    pub fn acceptance(&self) -> (f64, f64) {
        let n = self.chains.len().max(1) as f64;
        (
            self.chains.iter().map(|c| c.acceptance_single).sum::<f64>() / n,
            self.chains.iter().map(|c| c.acceptance_shift).sum::<f64>() / n,
        )
    }
}

struct Sampler<'a> {
    action: &'a DiscreteAction,
    neighbors: Vec<Vec<(usize, f64)>>,
    x: Vec<f64>,
    rng: ChaCha8Rng,
    single_width: f64,
    shift_width: f64,
    mix: f64,
    tried: [u64; 2],
    accepted: [u64; 2],
}

impl<'a> Sampler<'a> {
    fn new(action: &'a DiscreteAction, params: &McParams, chain: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(params.master_seed);
        rng.set_stream(chain);
        Self {
            action,
            neighbors: action.neighbors(),
            x: vec![0.0; action.n_dof()],
            rng,
            single_width: params.proposal_width,
            shift_width: params.proposal_width,
            mix: params.update_mix,
            tried: [0; 2],
            accepted: [0; 2],
        }
    }

    fn accept(&mut self, delta: f64) -> bool {
        delta <= 0.0 || self.rng.random::<f64>() < (-delta).exp()
    }

    fn single_move(&mut self) {
        let a = self.action;
        let p = a.p;
        let l = self.rng.random_range(0..a.n_sites());
        let t = self.rng.random_range(0..p);
        let i = l * p + t;
        let old = self.x[i];
        let new = old + self.single_width * (2.0 * self.rng.random::<f64>() - 1.0);
        let prev = self.x[l * p + (t + p - 1) % p];
        let next = self.x[l * p + (t + 1) % p];
        let k = a.kinetic();
        let kin = |y: f64| k * ((y - prev).powi(2) + (next - y).powi(2));
        let field: f64 = self.neighbors[l].iter().map(|&(o, j)| j * self.x[o * p + t]).sum();
        let delta = kin(new) - kin(old) + a.single(l, t, new) - a.single(l, t, old)
            - a.epsilon * field * (new - old);
        self.tried[0] += 1;
        if self.accept(delta) {
            self.x[i] = new;
            self.accepted[0] += 1;
        }
    }

    fn shift_move(&mut self) {
        let a = self.action;
        let p = a.p;
        let l = self.rng.random_range(0..a.n_sites());
        let shift = self.shift_width * (2.0 * self.rng.random::<f64>() - 1.0);
        let mut delta = 0.0;
        for t in 0..p {
            let old = self.x[l * p + t];
            let field: f64 = self.neighbors[l].iter().map(|&(o, j)| j * self.x[o * p + t]).sum();
            delta += a.single(l, t, old + shift) - a.single(l, t, old) - a.epsilon * field * shift;
        }
        self.tried[1] += 1;
        if self.accept(delta) {
            for t in 0..p {
                self.x[l * p + t] += shift;
            }
            self.accepted[1] += 1;
        }
    }

    fn sweep(&mut self) {
        for _ in 0..self.action.n_dof() {
            if self.rng.random::<f64>() < self.mix {
                self.single_move();
            } else {
                self.shift_move();
            }
        }
    }

    fn rates(&self) -> [f64; 2] {
        let r = |k: usize| if self.tried[k] == 0 { f64::NAN } else { self.accepted[k] as f64 / self.tried[k] as f64 };
        [r(0), r(1)]
    }

    fn reset_counts(&mut self) {
        self.tried = [0; 2];
        self.accepted = [0; 2];
    }

    fn adapt(&mut self) {
        let [s, l] = self.rates();
        let scale = |w: f64, r: f64| if r.is_nan() { w } else { (w * (2.0 * (r - TARGET_ACCEPTANCE)).exp()).clamp(1e-6, 1e3) };
        self.single_width = scale(self.single_width, s);
        self.shift_width = scale(self.shift_width, l);
        self.reset_counts();
    }
}

fn check_action(action: &DiscreteAction) -> Result<()> {
    let finite = action.beta.is_finite()
        && action.epsilon > 0.0
        && action.mass > 0.0
        && action.rigidity.is_finite()
        && action.bonds.iter().all(|b| b.coupling.is_finite())
        && action.boundary_field.iter().flatten().all(|v| v.is_finite());
    if !finite || action.n_dof() == 0 {
        return Err(Error::InvalidParameter("action has non-finite or empty parameters".into()));
    }
    Ok(())
}

/// Run one chain. The acceptance rate of every move type in use must end
/// within `[0.05, 0.95]` once adaptation is frozen.
pub fn sample_chain(action: &DiscreteAction, params: &McParams, probes: &[Probe], chain: u64) -> Result<ChainStats> {
    sample_chain_traced(action, params, probes, chain, None)
}

/// As [`sample_chain`], additionally pushing every measured sweep's probe
/// values into `trace`.
pub fn sample_chain_traced(
    action: &DiscreteAction,
    params: &McParams,
    probes: &[Probe],
    chain: u64,
    mut trace: Option<&mut Vec<Vec<f64>>>,
) -> Result<ChainStats> {
    params.validate()?;
    check_action(action)?;
    let probes: Vec<Probe> = probes.iter().map(Probe::normalized).collect();
    let n_sites = action.n_sites();
    let p = action.p;
    let mut s = Sampler::new(action, params, chain);
    for sweep in 0..params.n_burnin {
        s.sweep();
        if (sweep + 1) % ADAPT_EVERY == 0 {
            s.adapt();
        }
    }
    s.reset_counts();

    let np = probes.len();
    let n = params.n_sweeps;
    let mut batch_start = 0;
    let mut n_batches = 0;
    let mut sums = vec![0.0; np];
    let mut sums_sq = vec![0.0; np];
    let mut batch_means = vec![Vec::with_capacity(BATCHES); np];
    let mut batch_acc = vec![0.0; np];
    let mut values = vec![0.0; np];
    for sweep in 0..n {
        s.sweep();
        for (k, probe) in probes.iter().enumerate() {
            let v = probe.eval(&s.x, n_sites, p);
            values[k] = v;
            sums[k] += v;
            sums_sq[k] += v * v;
            batch_acc[k] += v;
        }
        // Batch `b` ends after sweep `(b + 1) n / BATCHES`.
        if (sweep + 1) * BATCHES >= (n_batches + 1) * n {
            let len = (sweep + 1 - batch_start) as f64;
            for k in 0..np {
                batch_means[k].push(batch_acc[k] / len);
                batch_acc[k] = 0.0;
            }
            batch_start = sweep + 1;
            n_batches += 1;
        }
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(values.clone());
        }
    }
    let [acc_single, acc_shift] = s.rates();
    for (name, r) in [("single-slice", acc_single), ("loop-shift", acc_shift)] {
        if !r.is_nan() && !(0.05..=0.95).contains(&r) {
            return Err(Error::Diagnostic(format!("{name} acceptance {r:.3} outside [0.05, 0.95] in chain {chain}")));
        }
    }
    if sums.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diagnostic(format!("non-finite observable in chain {chain}")));
    }
    Ok(ChainStats {
        probes,
        chains: vec![ChainSummary {
            chain,
            n_samples: n,
            sums,
            sums_sq,
            batch_means,
            acceptance_single: acc_single,
            acceptance_shift: acc_shift,
            single_width: s.single_width,
            shift_width: s.shift_width,
        }],
    })
}

/// Run `params.n_chains` chains in parallel and merge them by index.
pub fn run_chains(action: &DiscreteAction, params: &McParams, probes: &[Probe]) -> Result<ChainStats> {
    params.validate()?;
    let parts: Vec<ChainStats> = (0..params.n_chains as u64)
        .into_par_iter()
        .map(|c| sample_chain(action, params, probes, c))
        .collect::<Result<_>>()?;
    let mut out = ChainStats { probes: parts[0].probes.clone(), chains: Vec::new() };
    for part in &parts {
        out = out.merge(part)?;
    }
    Ok(out)
}

/// `P_Lambda(beta)`, the mean squared block magnetization on a periodic box.
pub fn estimate_order_parameter(stats: &ChainStats, lattice_box: &LatticeBox) -> Result<Measurement> {
    if lattice_box.boundary != Boundary::PeriodicTorus {
        return Err(Error::Precondition("the order parameter is defined on periodic boxes".into()));
    }
    stats.mean(&Probe::BlockMagnetizationSquared)
}

/// Connected correlator `<x_a x_b> - <x_a><x_b>`.
pub fn estimate_pair_correlation(stats: &ChainStats, a: (usize, usize), b: (usize, usize)) -> Result<Measurement> {
    let probes = [Probe::moment(&[a, b]), Probe::moment(&[a]), Probe::moment(&[b])];
    stats.jackknife(&probes, |m| m[0] - m[1] * m[2])
}

/// Four-point moment minus the three pairings of connected correlators.
pub fn estimate_ursell(stats: &ChainStats, pts: [(usize, usize); 4]) -> Result<Measurement> {
    let pairs = [(0, 1, 2, 3), (0, 2, 1, 3), (0, 3, 1, 2)];
    let mut probes = vec![Probe::moment(&pts)];
    for i in 0..4 {
        probes.push(Probe::moment(&[pts[i]]));
    }
    for &(i, j, k, l) in &pairs {
        probes.push(Probe::moment(&[pts[i], pts[j]]));
        probes.push(Probe::moment(&[pts[k], pts[l]]));
    }
    stats.jackknife(&probes, |m| {
        let mean = |i: usize| m[1 + i];
        let mut u = m[0];
        for (n, &(i, j, k, l)) in pairs.iter().enumerate() {
            let kij = m[5 + 2 * n] - mean(i) * mean(j);
            let kkl = m[6 + 2 * n] - mean(k) * mean(l);
            u -= kij * kkl;
        }
        u
    })
}
