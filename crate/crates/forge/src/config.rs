//! Run configuration: TOML with dotted sections, every field defaulted,
//! unknown keys rejected.

use std::path::Path;

use foliation_core::obstruction::{CeConvention, FormOptions, HatGrouping, Theorem};
use foliation_core::solver::{JacobianMode, ProbeOptions, Schedule, SolverOptions};
use foliation_core::surface::Variant;
use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub chart: ChartConfig,
    pub k: KConfig,
    pub sphere: SphereConfig,
    pub solver: SolverConfig,
    pub forms: FormsConfig,
    pub leaf: LeafConfig,
    pub probe: ProbeConfig,
    pub expand: ExpandConfig,
    pub factory: FactoryConfig,
    pub moments: MomentsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChartConfig {
    /// flat | round-sphere | schwarzschild | bump | skew-bump | conformal
    pub id: String,
    pub dim: usize,
    /// Base point `p`; empty selects the catalog point.
    pub point: Vec<f64>,
    /// Schwarzschild mass.
    pub mass: f64,
    /// Schwarzschild isotropic radius of the catalog point.
    pub rho: f64,
    /// Round-sphere radius.
    pub radius: f64,
    /// Conformal `ψ` terms `[coefficient, e0, e1, …]` about the origin.
    pub psi: Vec<Vec<f64>>,
    /// Validity radius of a `conformal` chart.
    pub validity: f64,
    /// analytic | finite-difference
    pub backend: String,
}

impl Default for ChartConfig {
    fn default() -> Self {
        ChartConfig {
            id: "bump".into(),
            dim: 3,
            point: Vec::new(),
            mass: 1.0,
            rho: 4.0,
            radius: 1.0,
            psi: Vec::new(),
            validity: 1.0,
            backend: "analytic".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KConfig {
    /// zero | constant | linear | quadratic | cubic
    pub kind: String,
    pub scale: f64,
    /// Constant trace part of the `linear` preset.
    pub c0: f64,
    /// Expansion point of the polynomial presets; empty selects `p`.
    pub center: Vec<f64>,
}

impl Default for KConfig {
    fn default() -> Self {
        KConfig { kind: "zero".into(), scale: 1.0, c0: 0.0, center: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SphereConfig {
    /// Harmonic truncation; the `S²` grid has `2L × 4L` nodes, `S¹` has `4L`.
    pub lmax: usize,
}

impl Default for SphereConfig {
    fn default() -> Self {
        SphereConfig { lmax: 12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub variant: Variant,
    pub tol_newton: f64,
    pub tol_kernel: f64,
    pub max_iters: usize,
    pub jacobian: JacobianMode,
    pub tau_step: f64,
    pub max_condition: f64,
    pub reuse_ratio: f64,
    pub diagnostics: bool,
    pub geodesic_diam: bool,
    /// Continuation schedule as fractions of the validity radius.
    pub r_max: f64,
    pub r_min: f64,
    pub ratio: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        let s = Schedule::default();
        SolverConfig {
            variant: Variant::Stcmc,
            tol_newton: o.tol_newton,
            tol_kernel: o.tol_kernel,
            max_iters: o.max_iters,
            jacobian: o.jacobian,
            tau_step: o.tau_step,
            max_condition: o.max_condition,
            reuse_ratio: o.reuse_ratio,
            diagnostics: o.diagnostics,
            geodesic_diam: o.geodesic_diam,
            r_max: s.r_max,
            r_min: s.r_min,
            ratio: s.ratio,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            tol_newton: self.tol_newton,
            tol_kernel: self.tol_kernel,
            max_iters: self.max_iters,
            jacobian: self.jacobian,
            tau_step: self.tau_step,
            max_condition: self.max_condition,
            reuse_ratio: self.reuse_ratio,
            diagnostics: self.diagnostics,
            geodesic_diam: self.geodesic_diam,
        }
    }

    pub fn schedule(&self) -> Schedule {
        Schedule { r_max: self.r_max, r_min: self.r_min, ratio: self.ratio }
    }
}

/// Theorem whose verdict decides the exit status of `forms`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoremChoice {
    PriStcmc,
    PriCePlus,
    PriCeMinus,
    SecCmcPlus,
    SecCmcMinus,
}

impl TheoremChoice {
    pub fn theorem(self) -> Theorem {
        match self {
            TheoremChoice::PriStcmc => Theorem::PriStcmc,
            TheoremChoice::PriCePlus => Theorem::PriCe { plus: true },
            TheoremChoice::PriCeMinus => Theorem::PriCe { plus: false },
            TheoremChoice::SecCmcPlus => Theorem::SecCmc { plus: true },
            TheoremChoice::SecCmcMinus => Theorem::SecCmc { plus: false },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FormsConfig {
    pub ce: CeConvention,
    pub hat: HatGrouping,
    pub c_config: f64,
    pub zero_tol: f64,
    pub max_condition: f64,
    pub theorem: TheoremChoice,
}

impl Default for FormsConfig {
    fn default() -> Self {
        let o = FormOptions::default();
        FormsConfig {
            ce: o.ce,
            hat: o.hat,
            c_config: o.c_config,
            zero_tol: o.zero_tol,
            max_condition: o.max_condition,
            theorem: TheoremChoice::PriStcmc,
        }
    }
}

impl FormsConfig {
    pub fn options(&self) -> FormOptions {
        FormOptions {
            ce: self.ce,
            hat: self.hat,
            c_config: self.c_config,
            zero_tol: self.zero_tol,
            max_condition: self.max_condition,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeafConfig {
    /// Radius as a fraction of the validity radius.
    pub r: f64,
    pub csv: bool,
}

impl Default for LeafConfig {
    fn default() -> Self {
        LeafConfig { r: 0.05, csv: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub variants: Vec<Variant>,
    pub r0: f64,
    pub levels: usize,
    pub match_tol: f64,
    pub stability_tol: f64,
    pub zero_tol: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        let o = ProbeOptions::default();
        ProbeConfig {
            variants: vec![Variant::Stcmc, Variant::CePlus, Variant::CeMinus],
            r0: o.r0,
            levels: o.levels,
            match_tol: o.match_tol,
            stability_tol: o.stability_tol,
            zero_tol: o.zero_tol,
        }
    }
}

impl ProbeConfig {
    pub fn options(&self) -> ProbeOptions {
        ProbeOptions {
            r0: self.r0,
            levels: self.levels,
            match_tol: self.match_tol,
            stability_tol: self.stability_tol,
            zero_tol: self.zero_tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpandConfig {
    /// Radii `k · step · R` for `k = 1..=count`.
    pub step: f64,
    pub count: usize,
    pub degree: usize,
    pub lmax: usize,
}

impl Default for ExpandConfig {
    fn default() -> Self {
        ExpandConfig { step: 0.02, count: 6, degree: 4, lmax: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FactoryConfig {
    pub epsilons: Vec<f64>,
    /// Solve one leaf on each deformed chart.
    pub solve: bool,
    /// Radius of that leaf as a fraction of the validity radius.
    pub r: f64,
}

impl Default for FactoryConfig {
    fn default() -> Self {
        FactoryConfig { epsilons: vec![0.0, 0.05, 0.1], solve: true, r: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentsConfig {
    pub dims: Vec<usize>,
    pub max_order: usize,
    pub lmax: usize,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        MomentsConfig { dims: vec![1, 2], max_order: 6, lmax: 8 }
    }
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_value(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| ForgeError::Config(format!("override `{spec}` is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(ForgeError::Config(format!("override key `{key}` is malformed")));
    }
    let mut cur = table;
    for part in &path[..path.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ForgeError::Config(format!("override `{key}`: `{part}` is not a section")))?;
    }
    cur.insert(path[path.len() - 1].to_string(), parse_value(value.trim()));
    Ok(())
}

impl Config {
    pub fn parse(text: &str, overrides: &[String]) -> Result<Config> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ForgeError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ForgeError::Config(e.to_string()))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| ForgeError::Io(path.display().to_string(), e))?;
        Config::parse(&text, overrides)
    }
}
