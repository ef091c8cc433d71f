use std::collections::BTreeMap;
use std::path::Path;

use qac_core::lattice::{build_action, Boundary, DiscreteAction, ExternalConfiguration, LatticeBox};
use qac_core::model::{DynamicalMatrix, ModelSpec, Potential, Potentials};
use qac_core::pimc::McParams;
use qac_core::quadrature::QuadratureScheme;
use qac_core::{Error, Result};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A run configuration. Every section except `[model]` is optional.
#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    #[serde(default)]
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub mc: McParams,
    #[serde(default)]
    pub criteria: CriteriaConfig,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub leeyang: LeeYangConfig,
    #[serde(default)]
    pub pressure: PressureConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    #[serde(default = "one")]
    pub nu: usize,
    pub mass: f64,
    pub rigidity: f64,
    pub beta: f64,
    /// `b^(1), b^(2), ...`, the coefficients of `x^2, x^4, ...`.
    #[serde(default)]
    pub even_coeffs: Vec<f64>,
    #[serde(default)]
    pub field: f64,
    #[serde(default = "no_coupling")]
    pub couplings: DynamicalMatrix,
    /// Site-dependent potentials keyed by `"i,j,k"`.
    #[serde(default)]
    pub overrides: BTreeMap<String, Potential>,
}

fn one() -> usize {
    1
}

fn no_coupling() -> DynamicalMatrix {
    DynamicalMatrix::NearestNeighbor { j: 0.0 }
}

impl ModelConfig {
    pub fn spec(&self) -> ModelSpec {
        let base = Potential::new(self.even_coeffs.clone(), self.field);
        let potentials = if self.overrides.is_empty() {
            Potentials::Uniform(base)
        } else {
            Potentials::SiteDependent { default: base, overrides: self.overrides.clone() }
        };
        ModelSpec {
            d: self.d,
            nu: self.nu,
            mass: self.mass,
            rigidity: self.rigidity,
            beta: self.beta,
            potentials,
            couplings: self.couplings.clone(),
        }
    }

    pub fn potential(&self) -> Potential {
        Potential::new(self.even_coeffs.clone(), self.field)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum BoxKind {
    Line,
    Torus,
    Box,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Zero,
    External,
}

/// Finite box, its boundary condition and the discretization.
#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub kind: BoxKind,
    /// Number of sites of a line.
    pub sites: usize,
    /// A torus covers `(-L, L]^d`.
    pub half_width: i64,
    pub lower: Vec<i64>,
    pub upper: Vec<i64>,
    /// Ignored on a torus, which is always periodic.
    pub boundary: BoundaryKind,
    pub xi: BTreeMap<String, Vec<f64>>,
    /// Imaginary-time slices `P`.
    pub slices: usize,
    /// Quadrature nodes per variable for the exact oracle.
    pub nodes: usize,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            kind: BoxKind::Line,
            sites: 1,
            half_width: 1,
            lower: Vec::new(),
            upper: Vec::new(),
            boundary: BoundaryKind::Zero,
            xi: BTreeMap::new(),
            slices: 4,
            nodes: 16,
        }
    }
}

impl LatticeConfig {
    pub fn lattice_box(&self, d: usize) -> Result<LatticeBox> {
        let boundary = match self.boundary {
            BoundaryKind::Zero => Boundary::Zero,
            BoundaryKind::External => Boundary::External { xi: ExternalConfiguration { values: self.xi.clone() } },
        };
        match self.kind {
            BoxKind::Line if d == 1 => LatticeBox::line(self.sites, boundary),
            BoxKind::Line => Err(Error::Config(format!("a line box needs d = 1, the model has d = {d}"))),
            BoxKind::Torus => LatticeBox::torus(d, self.half_width),
            BoxKind::Box => LatticeBox::new(self.lower.clone(), self.upper.clone(), boundary),
        }
    }

    pub fn action(&self, model: &ModelConfig) -> Result<(LatticeBox, DiscreteAction)> {
        let b = self.lattice_box(model.d)?;
        let action = build_action(&model.spec(), &b, self.slices)?;
        Ok((b, action))
    }

    pub fn quadrature(&self, action: &DiscreteAction) -> Result<QuadratureScheme> {
        QuadratureScheme::trapezoid_for(action, self.nodes)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct CriteriaConfig {
    /// Curvature bound `b` of the convex part of the potential.
    pub b: Option<f64>,
    /// Oscillation `delta` of the bounded part.
    pub delta: Option<f64>,
    pub grid_points: usize,
    pub n_keep: usize,
    /// Step of the Laplace-transform quadrature for lattice integrals.
    pub laplace_step: Option<f64>,
}

impl Default for CriteriaConfig {
    fn default() -> Self {
        Self { b: None, delta: None, grid_points: 200, n_keep: 64, laplace_step: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub grid_points: usize,
    pub x_max: Option<f64>,
    pub n_keep: usize,
    /// Points of the `Gamma(tau)` table on `[0, beta]`; zero skips it.
    pub tau_points: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { grid_points: 200, x_max: None, n_keep: 64, tau_points: 0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// `(site, slice)` points whose moments, pair correlations and (for
    /// four points) Ursell function are estimated.
    pub points: Vec<(usize, usize)>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { points: vec![(0, 0)] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum SuiteName {
    Canonical,
    Random,
    Wick,
    Meta,
    All,
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub suite: SuiteName,
    pub seed: u64,
    pub count: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { suite: SuiteName::All, seed: 0, count: 100 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct LeeYangConfig {
    /// Highest power of `h^2` kept in the partition-function series.
    pub truncation: usize,
    pub h_max: f64,
    pub h_points: usize,
}

impl Default for LeeYangConfig {
    fn default() -> Self {
        Self { truncation: 12, h_max: 1.0, h_points: 21 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct PressureConfig {
    pub h_max: f64,
    pub h_points: usize,
    /// Block label of every site; inter-block bonds are switched on
    /// gradually when present.
    pub blocks: Option<Vec<usize>>,
    pub steps: usize,
}

impl Default for PressureConfig {
    fn default() -> Self {
        Self { h_max: 1.0, h_points: 21, blocks: None, steps: 8 }
    }
}

/// Grid of `n` points on `[-h_max, h_max]`, exactly symmetric about zero.
pub fn field_grid(h_max: f64, n: usize) -> Result<Vec<f64>> {
    if n < 3 || !(h_max > 0.0 && h_max.is_finite()) {
        return Err(Error::Config("a field grid needs at least 3 points and h_max > 0".into()));
    }
    let half = (n - 1) as f64;
    Ok((0..n).map(|k| h_max * (2.0 * k as f64 - half) / half).collect())
}

/// Parsed configuration and the hash of its effective contents.
pub struct Loaded {
    pub config: Config,
    pub hash: String,
}

/// Read a TOML file, apply `section.key=value` overrides and validate.
pub fn load(path: &Path, overrides: &[String]) -> Result<Loaded> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let canonical = serde_json::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
    let hash = Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    let config: Config = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    Ok(Loaded { config, hash })
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' is not of the form key=value")))?;
    let value: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or(toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().filter(|(l, _)| !l.is_empty()).ok_or_else(|| Error::Config("empty override key".into()))?;
    let mut cur = table;
    for p in path {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key '{key}': '{p}' is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
