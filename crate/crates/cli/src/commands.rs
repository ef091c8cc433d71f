use qac_core::brillouin::LaplaceQuadrature;
use qac_core::criteria::{evaluate_criteria, CriteriaOptions, CriterionReport, DecompositionSpec};
use qac_core::inequality::{
    antiferromagnetic_meta_test, harmonic_wick_instance, run_canonical_suite, run_random_suite,
    verify_lebowitz, InequalityReport, SuiteReport, EXACT_TOLERANCE,
};
use qac_core::leeyang::{
    lee_yang_condition, locate_partition_zeros, pressure_curve, van_hove_pressure_check, LaguerreCheck, PressureCurve,
    VanHoveReport, ZeroReport,
};
use qac_core::lattice::Boundary;
use qac_core::model::DynamicalMatrix;
use qac_core::pimc::{
    correlation_probes, estimate_order_parameter, estimate_pair_correlation, estimate_ursell, run_chains,
    sample_chain_traced, Measurement, Probe,
};
use qac_core::spectral::{
    low_variance, matsubara_two_point, solve_schrodinger, spectral_gap, upp_correlator_integral, SchrodingerProblem,
};
use qac_core::{Error, Result};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::config::{field_grid, Config, SuiteName};
use crate::output::{fmt_f64, OutputDir};

/// Outcome of a subcommand; `failed` marks an inequality-suite failure.
pub struct Outcome {
    pub report: String,
    pub failed: bool,
}

fn criteria_options(cfg: &Config) -> CriteriaOptions {
    let c = &cfg.criteria;
    CriteriaOptions {
        quadrature: c.laplace_step.map(LaplaceQuadrature::with_step).unwrap_or_default(),
        grid_points: c.grid_points,
        n_keep: c.n_keep,
    }
}

fn decomposition(cfg: &Config) -> Result<Option<DecompositionSpec>> {
    match (cfg.criteria.b, cfg.criteria.delta) {
        (None, None) => Ok(None),
        (Some(b), delta) => Ok(Some(DecompositionSpec { b, delta: delta.unwrap_or(0.0) })),
        (None, Some(_)) => Err(Error::Config("criteria.delta needs criteria.b".into())),
    }
}

pub fn criteria(cfg: &Config, out: &mut OutputDir) -> Result<Outcome> {
    let report = evaluate_criteria(&cfg.model.spec(), decomposition(cfg)?.as_ref(), &criteria_options(cfg))?;
    Ok(Outcome { report: out.json("criteria.json", &report)?, failed: false })
}

/// Sweep of a named parameter.
pub struct Table {
    pub parameter: String,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

fn set_parameter(cfg: &mut Config, name: &str, value: f64) -> Result<()> {
    let m = &mut cfg.model;
    match name {
        "beta" => m.beta = value,
        "mass" => m.mass = value,
        "rigidity" => m.rigidity = value,
        "field" => m.field = value,
        "j" => match &mut m.couplings {
            DynamicalMatrix::NearestNeighbor { j }
            | DynamicalMatrix::ExponentialDecay { j, .. }
            | DynamicalMatrix::PolynomialDecay { j, .. } => *j = value,
            DynamicalMatrix::FiniteRange { .. } => {
                return Err(Error::Config("'j' cannot be swept for finite-range couplings".into()))
            }
        },
        b if b.starts_with('b') => {
            let s: usize = b[1..]
                .parse()
                .ok()
                .filter(|&s| s >= 1)
                .ok_or_else(|| Error::Config(format!("unknown parameter '{name}'")))?;
            if m.even_coeffs.len() < s {
                m.even_coeffs.resize(s, 0.0);
            }
            m.even_coeffs[s - 1] = value;
        }
        _ => return Err(Error::Config(format!("unknown parameter '{name}'"))),
    }
    Ok(())
}

pub fn criteria_table(cfg: &Config, table: &Table, out: &mut OutputDir) -> Result<Outcome> {
    if table.steps < 1 || !table.from.is_finite() || !table.to.is_finite() {
        return Err(Error::Config("a table needs finite bounds and at least one step".into()));
    }
    let opts = criteria_options(cfg);
    let dec = decomposition(cfg)?;
    let mut rows = Vec::new();
    let mut reports: Vec<(f64, CriterionReport)> = Vec::new();
    for k in 0..=table.steps {
        let value = table.from + (table.to - table.from) * k as f64 / table.steps as f64;
        let mut c = cfg.clone();
        set_parameter(&mut c, &table.parameter, value)?;
        let r = evaluate_criteria(&c.model.spec(), dec.as_ref(), &opts)?;
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        let flag = |x: Option<bool>| x.map(|b| b.to_string()).unwrap_or_default();
        rows.push(vec![
            fmt_f64(value),
            opt(r.theta_d),
            opt(r.t_star.map(|t| t.value)),
            opt(r.phase_transition_threshold),
            r.phase_transition_predicted.to_string(),
            opt(r.beta_star.map(|b| b.value)),
            opt(r.delta_gap.as_ref().map(|g| g.gap)),
            fmt_f64(r.j_hat_zero),
            flag(r.quantum_stabilization),
            flag(r.nn_stabilization),
            flag(r.high_t_unique),
        ]);
        reports.push((value, r));
    }
    let header = [
        table.parameter.as_str(),
        "theta_d",
        "t_star",
        "threshold",
        "phase_transition_predicted",
        "beta_star",
        "gap",
        "j_hat_zero",
        "quantum_stabilization",
        "nn_stabilization",
        "high_t_unique",
    ];
    out.csv("criteria_table.csv", &header, &rows)?;
    let report = out.json("criteria.json", &reports.into_iter().map(|(_, r)| r).collect::<Vec<_>>())?;
    Ok(Outcome { report, failed: false })
}

#[derive(Serialize, Deserialize, JsonSchema)]
pub struct SpectrumReport {
    pub energies: Vec<f64>,
    pub gap: f64,
    pub gap_index: usize,
    pub gap_at_truncation_edge: bool,
    pub k_upp: f64,
    pub k_upp_tail_bound: f64,
    pub k_upp_bound: f64,
    pub variance: f64,
    pub x_max: f64,
}

pub fn spectrum(cfg: &Config, out: &mut OutputDir) -> Result<Outcome> {
    let m = &cfg.model;
    let s = &cfg.spectrum;
    let problem = SchrodingerProblem::new(m.mass, m.rigidity, m.potential())
        .with_grid(s.grid_points, s.x_max)
        .with_n_keep(s.n_keep);
    let dec = solve_schrodinger(&problem)?;
    let gap = spectral_gap(&dec)?;
    let upp = upp_correlator_integral(&dec, m.beta, m.mass)?;
    let report = SpectrumReport {
        energies: dec.energies.clone(),
        gap: gap.gap,
        gap_index: gap.index,
        gap_at_truncation_edge: gap.at_truncation_edge,
        k_upp: upp.value,
        k_upp_tail_bound: upp.tail_bound,
        k_upp_bound: 1.0 / (m.mass * gap.gap * gap.gap),
        variance: low_variance(&dec, m.beta)?,
        x_max: dec.x_max,
    };
    if s.tau_points >= 2 {
        let rows = (0..s.tau_points)
            .map(|k| {
                let tau = m.beta * k as f64 / (s.tau_points - 1) as f64;
                Ok(vec![fmt_f64(tau), fmt_f64(matsubara_two_point(&dec, m.beta, tau)?)])
            })
            .collect::<Result<Vec<_>>>()?;
        out.csv("matsubara.csv", &["tau", "gamma"], &rows)?;
    }
    Ok(Outcome { report: out.json("spectrum.json", &report)?, failed: false })
}

#[derive(Serialize, Deserialize, JsonSchema)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    pub error: f64,
    pub effective_samples: Option<f64>,
}

#[derive(Serialize, Deserialize, JsonSchema)]
pub struct SimulateReport {
    pub n_sites: usize,
    pub slices: usize,
    pub n_chains: usize,
    pub n_sweeps: usize,
    pub master_seed: u64,
    pub acceptance_min: f64,
    pub acceptance_max: f64,
    pub estimates: Vec<Estimate>,
    pub order_parameter: Option<Measurement>,
}

fn point_name(p: &[(usize, usize)]) -> String {
    p.iter().map(|(l, t)| format!("x({l},{t})")).collect::<Vec<_>>().join("*")
}

pub fn simulate(cfg: &Config, trace: bool, out: &mut OutputDir) -> Result<Outcome> {
    let (lattice_box, action) = cfg.lattice.action(&cfg.model)?;
    let points = &cfg.simulate.points;
    if points.is_empty() || points.len() > 4 {
        return Err(Error::Config("simulate.points needs between 1 and 4 points".into()));
    }
    for &(l, t) in points {
        if l >= action.n_sites() || t >= action.p {
            return Err(Error::Config(format!("point ({l}, {t}) is outside the box")));
        }
    }
    let periodic = lattice_box.boundary == Boundary::PeriodicTorus;
    let mut probes = correlation_probes(points);
    if periodic {
        probes.push(Probe::BlockMagnetizationSquared);
    }
    let stats = run_chains(&action, &cfg.mc, &probes)?;
    let mut estimates = Vec::new();
    for probe in &probes {
        if let Probe::Moment { points } = probe {
            let m = stats.mean(probe)?;
            estimates.push(Estimate {
                name: point_name(points),
                value: m.value,
                error: m.error,
                effective_samples: Some(stats.effective_samples(probe)?),
            });
        }
    }
    for (i, &a) in points.iter().enumerate() {
        for &b in &points[i + 1..] {
            let k = estimate_pair_correlation(&stats, a, b)?;
            estimates.push(Estimate { name: format!("K[{}]", point_name(&[a, b])), value: k.value, error: k.error, effective_samples: None });
        }
    }
    if let [a, b, c, d] = points[..] {
        let u = estimate_ursell(&stats, [a, b, c, d])?;
        estimates.push(Estimate { name: format!("U[{}]", point_name(points)), value: u.value, error: u.error, effective_samples: None });
    }
    let order_parameter = if periodic { Some(estimate_order_parameter(&stats, &lattice_box)?) } else { None };
    let (lo, hi) = stats.acceptance();
    let report = SimulateReport {
        n_sites: action.n_sites(),
        slices: action.p,
        n_chains: stats.n_chains(),
        n_sweeps: cfg.mc.n_sweeps,
        master_seed: cfg.mc.master_seed,
        acceptance_min: lo,
        acceptance_max: hi,
        estimates,
        order_parameter,
    };
    if trace {
        let mut values = Vec::new();
        sample_chain_traced(&action, &cfg.mc, &probes, 0, Some(&mut values))?;
        let names: Vec<String> = probes
            .iter()
            .map(|p| match p {
                Probe::Moment { points } => point_name(points),
                Probe::BlockMagnetizationSquared => "block_magnetization_squared".into(),
            })
            .collect();
        let mut header = vec!["sweep"];
        header.extend(names.iter().map(String::as_str));
        let rows: Vec<Vec<String>> = values
            .iter()
            .enumerate()
            .map(|(i, v)| std::iter::once(i.to_string()).chain(v.iter().map(|x| fmt_f64(*x))).collect())
            .collect();
        out.csv("trace.csv", &header, &rows)?;
    }
    Ok(Outcome { report: out.json("simulate.json", &report)?, failed: false })
}

#[derive(Serialize, Deserialize, JsonSchema)]
pub struct TestCase {
    pub classname: String,
    pub name: String,
    pub passed: bool,
    pub margin: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub vacuous: bool,
    pub failure: Option<String>,
}

#[derive(Serialize, Deserialize, JsonSchema)]
pub struct TestSuite {
    pub name: String,
    pub tests: usize,
    pub failures: usize,
    pub worst_margin: f64,
    pub testcases: Vec<TestCase>,
}

#[derive(Serialize, Deserialize, JsonSchema)]
pub struct VerifyReport {
    pub name: String,
    pub tests: usize,
    pub failures: usize,
    pub errors: usize,
    pub testsuites: Vec<TestSuite>,
}

const WICK_TOLERANCE: f64 = 1e-10;

fn case(r: &InequalityReport, expect_violation: bool) -> TestCase {
    let passed = r.passed != expect_violation;
    let failure = (!passed).then(|| {
        if expect_violation {
            format!("expected a violation, margin {}", fmt_f64(r.margin))
        } else {
            format!("margin {} below -{}", fmt_f64(r.margin), fmt_f64(r.tolerance))
        }
    });
    TestCase {
        classname: r.instance.clone(),
        name: r.name.clone(),
        passed,
        margin: r.margin,
        lhs: r.lhs,
        rhs: r.rhs,
        tolerance: r.tolerance,
        vacuous: r.vacuous,
        failure,
    }
}

fn suite(s: &SuiteReport) -> TestSuite {
    let testcases: Vec<TestCase> = s.reports.iter().map(|r| case(r, false)).collect();
    TestSuite {
        name: s.name.clone(),
        tests: testcases.len(),
        failures: testcases.iter().filter(|c| !c.passed).count(),
        worst_margin: s.worst_margin,
        testcases,
    }
}

pub fn verify(cfg: &Config, out: &mut OutputDir) -> Result<Outcome> {
    let v = &cfg.verify;
    let want = |s: SuiteName| v.suite == s || v.suite == SuiteName::All;
    let mut suites = Vec::new();
    if want(SuiteName::Canonical) {
        suites.push(suite(&run_canonical_suite()?));
    }
    if want(SuiteName::Random) {
        suites.push(suite(&run_random_suite(v.seed, v.count)?));
    }
    if want(SuiteName::Wick) {
        let inst = harmonic_wick_instance()?;
        let reports = verify_lebowitz(&inst.action, &[(0, 0), (0, 1), (0, 2), (0, 3)], &inst.quad)?;
        let mut s = suite(&SuiteReport::new("wick", reports));
        // Gaussian domination is an equality for the harmonic model.
        for c in s.testcases.iter_mut() {
            if c.margin.abs() >= WICK_TOLERANCE {
                c.passed = false;
                c.failure = Some(format!("|margin| {} is not below {}", fmt_f64(c.margin.abs()), fmt_f64(WICK_TOLERANCE)));
            }
        }
        s.failures = s.testcases.iter().filter(|c| !c.passed).count();
        suites.push(s);
    }
    if want(SuiteName::Meta) {
        let r = antiferromagnetic_meta_test()?;
        let c = case(&r, true);
        suites.push(TestSuite {
            name: "meta".into(),
            tests: 1,
            failures: usize::from(!c.passed),
            worst_margin: r.margin,
            testcases: vec![c],
        });
    }
    let failures = suites.iter().map(|s| s.failures).sum();
    let report = VerifyReport {
        name: "qac-verify".into(),
        tests: suites.iter().map(|s| s.tests).sum(),
        failures,
        errors: 0,
        testsuites: suites,
    };
    Ok(Outcome { report: out.json("verify.json", &report)?, failed: failures > 0 })
}

fn pressure_rows(curve: &PressureCurve) -> Vec<Vec<String>> {
    let deriv = curve.central_derivative();
    (0..curve.h.len())
        .map(|i| {
            vec![
                fmt_f64(curve.h[i]),
                fmt_f64(curve.pressure[i]),
                fmt_f64(curve.magnetization[i]),
                i.checked_sub(1).and_then(|k| deriv.get(k)).map(|d| fmt_f64(*d)).unwrap_or_default(),
            ]
        })
        .collect()
}

const PRESSURE_HEADER: [&str; 4] = ["h", "pressure", "magnetization", "central_derivative"];

#[derive(Serialize, Deserialize, JsonSchema)]
pub struct LeeYangReport {
    pub condition: LaguerreCheck,
    pub zeros: Option<ZeroReport>,
    pub zeros_skipped: Option<String>,
    pub scope: String,
}

pub fn leeyang(cfg: &Config, out: &mut OutputDir) -> Result<Outcome> {
    let condition = lee_yang_condition(&cfg.model.even_coeffs, cfg.model.rigidity)?;
    let (_, action) = cfg.lattice.action(&cfg.model)?;
    let quad = cfg.lattice.quadrature(&action)?;
    let (zeros, zeros_skipped) = match locate_partition_zeros(&action, &quad, cfg.leeyang.truncation) {
        Ok(z) => (Some(z), None),
        Err(e) if e.is_input_error() => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let grid = field_grid(cfg.leeyang.h_max, cfg.leeyang.h_points)?;
    let wide = cfg.lattice.quadrature(&action.with_uniform_field(cfg.leeyang.h_max))?;
    let curve = pressure_curve(&action, &grid, &wide)?;
    out.csv("pressure.csv", &PRESSURE_HEADER, &pressure_rows(&curve))?;
    let report = LeeYangReport {
        condition,
        zeros,
        zeros_skipped,
        scope: "finite volume: certifies the Lee-Yang structure of this box only".into(),
    };
    Ok(Outcome { report: out.json("leeyang.json", &report)?, failed: false })
}

#[derive(Serialize, Deserialize, JsonSchema)]
pub struct PressureReport {
    pub n_sites: usize,
    pub slices: usize,
    pub evenness_defect: f64,
    pub min_second_difference: f64,
    pub convex: bool,
    pub van_hove: Option<VanHoveReport>,
}

pub fn pressure(cfg: &Config, out: &mut OutputDir) -> Result<Outcome> {
    let (_, action) = cfg.lattice.action(&cfg.model)?;
    let p = &cfg.pressure;
    let grid = field_grid(p.h_max, p.h_points)?;
    let quad = cfg.lattice.quadrature(&action.with_uniform_field(p.h_max))?;
    let curve = pressure_curve(&action, &grid, &quad)?;
    out.csv("pressure.csv", &PRESSURE_HEADER, &pressure_rows(&curve))?;
    let min_second = curve.second_differences().into_iter().fold(f64::INFINITY, f64::min);
    let van_hove = match &p.blocks {
        Some(b) => Some(van_hove_pressure_check(&action, b, &cfg.lattice.quadrature(&action)?, p.steps)?),
        None => None,
    };
    let report = PressureReport {
        n_sites: curve.n_sites,
        slices: curve.slices,
        evenness_defect: curve.evenness_defect(),
        min_second_difference: min_second,
        convex: min_second >= -EXACT_TOLERANCE,
        van_hove,
    };
    Ok(Outcome { report: out.json("pressure.json", &report)?, failed: false })
}
