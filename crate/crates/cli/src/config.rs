//! Versioned TOML experiment definitions.
//!
//! ```toml
//! version = 1
//! name = "gap-smoke"
//! seed = 7
//!
//! [cost]
//! p = 2.5
//! norm = { dim = 2, kind = "euclidean" }
//!
//! [suite]
//! kind = "duality_gap"
//! instances = 100
//!
//! [tolerances]
//! gap = 1e-8
//!
//! [output]
//! dir = "out/gap"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wslab_core::CostSpec;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub seed: u64,
    pub cost: CostSpec,
    pub suite: Suite,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub output: Output,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Suite {
    SlopeCheck(SlopeCheck),
    DualityGap(DualityGap),
    PotentialEstimates(PotentialEstimates),
    MaxpotConvergence(MaxpotConvergence),
    BoasSuite(BoasSuite),
    ProjectionConvergence(ProjectionConvergence),
    ModulusProbe(ModulusProbe),
}

impl Suite {
    pub fn kind(&self) -> &'static str {
        match self {
            Suite::SlopeCheck(_) => "slope_check",
            Suite::DualityGap(_) => "duality_gap",
            Suite::PotentialEstimates(_) => "potential_estimates",
            Suite::MaxpotConvergence(_) => "maxpot_convergence",
            Suite::BoasSuite(_) => "boas_suite",
            Suite::ProjectionConvergence(_) => "projection_convergence",
            Suite::ModulusProbe(_) => "modulus_probe",
        }
    }

    /// Tolerance names the suite reads, with defaults.
    pub fn default_tolerances(&self) -> &'static [(&'static str, f64)] {
        match self {
            Suite::SlopeCheck(_) => &[("bracket_width", 0.05), ("lower_slack", 1e-9)],
            Suite::DualityGap(_) => &[("gap", 1e-8), ("feasibility", 1e-8), ("slackness", 1e-8), ("fixpoint", 1e-10)],
            Suite::PotentialEstimates(_) => &[],
            Suite::MaxpotConvergence(_) => &[("stderr_multiple", 3.0)],
            Suite::BoasSuite(_) => &[("residual", 1e-9), ("parallelogram", 1e-8)],
            Suite::ProjectionConvergence(_) => &[("monotone", 1e-8), ("endpoint", 1e-8)],
            Suite::ModulusProbe(_) => &[("convexity", 1e-9)],
        }
    }
}

/// Which cylinder functions a slope check draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionFamily {
    Random,
    Constant,
    Linear,
}

fn default_family() -> FunctionFamily {
    FunctionFamily::Random
}
fn d_8() -> usize {
    8
}
fn d_10() -> usize {
    10
}
fn d_20() -> usize {
    20
}
fn d_100() -> usize {
    100
}
fn d_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeCheck {
    #[serde(default = "d_10")]
    pub functions: usize,
    #[serde(default = "default_family")]
    pub family: FunctionFamily,
    #[serde(default = "d_8")]
    pub atoms: usize,
    #[serde(default)]
    pub p_values: Option<Vec<f64>>,
    #[serde(default = "SlopeCheck::default_eps")]
    pub eps: f64,
    #[serde(default = "SlopeCheck::default_t")]
    pub t_schedule: Vec<f64>,
    #[serde(default = "SlopeCheck::default_radii")]
    pub radii: Vec<f64>,
    #[serde(default = "d_10")]
    pub pairs_per_radius: usize,
    /// Half-width of the box the support atoms are drawn from.
    #[serde(default = "d_one")]
    pub support: f64,
}

impl SlopeCheck {
    fn default_eps() -> f64 {
        1e-4
    }
    fn default_t() -> Vec<f64> {
        wslab_core::cylinder::DEFAULT_T_SCHEDULE.to_vec()
    }
    fn default_radii() -> Vec<f64> {
        vec![0.5, 0.25, 0.1, 0.05, 0.01]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualityGap {
    #[serde(default = "d_100")]
    pub instances: usize,
    #[serde(default = "DualityGap::default_min")]
    pub min_atoms: usize,
    #[serde(default = "DualityGap::default_max")]
    pub max_atoms: usize,
    #[serde(default)]
    pub p_values: Option<Vec<f64>>,
    #[serde(default = "d_one")]
    pub support: f64,
}

impl DualityGap {
    fn default_min() -> usize {
        2
    }
    fn default_max() -> usize {
        50
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialEstimates {
    #[serde(default = "d_20")]
    pub instances: usize,
    #[serde(default = "PotentialEstimates::default_radii")]
    pub radii: Vec<f64>,
    #[serde(default)]
    pub p_values: Option<Vec<f64>>,
    #[serde(default = "d_10")]
    pub mu_atoms: usize,
    #[serde(default = "d_10")]
    pub nu_atoms: usize,
    #[serde(default = "PotentialEstimates::default_pairs")]
    pub pairs: usize,
}

impl PotentialEstimates {
    fn default_radii() -> Vec<f64> {
        vec![1.0, 2.0]
    }
    fn default_pairs() -> usize {
        10_000
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxpotConvergence {
    #[serde(default = "MaxpotConvergence::default_grid")]
    pub grid_size: usize,
    #[serde(default = "MaxpotConvergence::default_battery")]
    pub battery: usize,
    /// How many battery members are also placed in the grid.
    #[serde(default)]
    pub battery_in_grid: Option<usize>,
    #[serde(default = "MaxpotConvergence::default_nu_atoms")]
    pub nu_atoms: usize,
    /// `supp nu` lies in the ball of this radius.
    #[serde(default = "d_one")]
    pub radius: f64,
    #[serde(default = "MaxpotConvergence::default_support")]
    pub support: f64,
    #[serde(default = "MaxpotConvergence::default_max_atoms")]
    pub max_grid_atoms: usize,
    #[serde(default = "MaxpotConvergence::default_eps")]
    pub eps: f64,
    #[serde(default = "MaxpotConvergence::default_sample_n")]
    pub sample_n: usize,
    #[serde(default = "MaxpotConvergence::default_bootstrap")]
    pub bootstrap: usize,
    /// Write the dictionary as JSON next to the summary.
    #[serde(default)]
    pub save_dictionary: bool,
}

impl MaxpotConvergence {
    fn default_grid() -> usize {
        40
    }
    fn default_battery() -> usize {
        5
    }
    fn default_nu_atoms() -> usize {
        30
    }
    fn default_support() -> f64 {
        1.5
    }
    fn default_max_atoms() -> usize {
        4
    }
    fn default_eps() -> f64 {
        0.05
    }
    fn default_sample_n() -> usize {
        2000
    }
    fn default_bootstrap() -> usize {
        200
    }
}

/// `(p', r, s, q)`: dual exponent of the cost, Boas exponents, energy exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoasPreset {
    pub p_conj: f64,
    pub r: f64,
    pub s: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoasSuite {
    pub presets: Vec<BoasPreset>,
    #[serde(default = "BoasSuite::default_pairs")]
    pub pairs: usize,
    #[serde(default = "d_10")]
    pub meta_atoms: usize,
    #[serde(default = "BoasSuite::default_measure_atoms")]
    pub measure_atoms: usize,
}

impl BoasSuite {
    fn default_pairs() -> usize {
        500
    }
    fn default_measure_atoms() -> usize {
        4
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConvergence {
    #[serde(default = "d_20")]
    pub instances: usize,
    #[serde(default = "ProjectionConvergence::default_mu")]
    pub mu_atoms: usize,
    #[serde(default = "ProjectionConvergence::default_nu")]
    pub nu_atoms: usize,
    #[serde(default = "ProjectionConvergence::default_support")]
    pub support: f64,
}

impl ProjectionConvergence {
    fn default_mu() -> usize {
        12
    }
    fn default_nu() -> usize {
        15
    }
    fn default_support() -> f64 {
        2.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulusProbe {
    /// Exponent of the pre-Cheeger energy whose `q`-th root is probed.
    #[serde(default = "ModulusProbe::default_q")]
    pub q: f64,
    /// Power `t` in `1 - J((u+v)/2)^t`.
    #[serde(default = "ModulusProbe::default_q")]
    pub t: f64,
    #[serde(default = "ModulusProbe::default_trials")]
    pub trials: usize,
    #[serde(default = "ModulusProbe::default_meta")]
    pub meta_atoms: usize,
    #[serde(default = "BoasSuite::default_measure_atoms")]
    pub measure_atoms: usize,
}

impl ModulusProbe {
    fn default_q() -> f64 {
        2.0
    }
    fn default_trials() -> usize {
        300
    }
    fn default_meta() -> usize {
        4
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn at_least(name: &str, v: usize, min: usize) -> Result<(), CliError> {
    if v >= min {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be at least {min}, got {v}")))
    }
}

fn exponents(name: &str, ps: &Option<Vec<f64>>) -> Result<(), CliError> {
    if let Some(ps) = ps {
        if ps.is_empty() {
            return Err(CliError::Config(format!("{name} must not be empty")));
        }
        for p in ps {
            if !(*p > 1.0 && p.is_finite()) {
                return Err(CliError::Config(format!("{name}: exponent {p} outside (1, inf)")));
            }
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Tolerance by name, falling back to the suite default.
    pub fn tol(&self, name: &str) -> f64 {
        self.tolerances.get(name).copied().unwrap_or_else(|| {
            self.suite
                .default_tolerances()
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, v)| *v)
                .expect("tolerance names are fixed per suite")
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported config version {} (this build reads {SCHEMA_VERSION})",
                self.version
            )));
        }
        let known = self.suite.default_tolerances();
        for (name, v) in &self.tolerances {
            if !known.iter().any(|(n, _)| n == name) {
                return Err(CliError::Config(format!("unknown tolerance '{name}' for {}", self.suite.kind())));
            }
            positive(&format!("tolerance {name}"), *v)?;
        }
        let d = self.cost.dim();
        match &self.suite {
            Suite::SlopeCheck(s) => {
                at_least("functions", s.functions, 1)?;
                at_least("atoms", s.atoms, 1)?;
                at_least("pairs_per_radius", s.pairs_per_radius, 1)?;
                exponents("p_values", &s.p_values)?;
                positive("eps", s.eps)?;
                positive("support", s.support)?;
                if s.t_schedule.len() < 3 {
                    return Err(CliError::Config("t_schedule needs at least 3 entries".into()));
                }
                for t in &s.t_schedule {
                    positive("t_schedule entry", *t)?;
                }
                if s.radii.is_empty() || s.radii.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(CliError::Config("radii must be nonempty and strictly decreasing".into()));
                }
                for r in &s.radii {
                    positive("radius", *r)?;
                }
            }
            Suite::DualityGap(s) => {
                at_least("min_atoms", s.min_atoms, 1)?;
                if s.max_atoms < s.min_atoms {
                    return Err(CliError::Config("max_atoms below min_atoms".into()));
                }
                exponents("p_values", &s.p_values)?;
                positive("support", s.support)?;
            }
            Suite::PotentialEstimates(s) => {
                at_least("mu_atoms", s.mu_atoms, 1)?;
                at_least("nu_atoms", s.nu_atoms, 1)?;
                at_least("pairs", s.pairs, 1)?;
                exponents("p_values", &s.p_values)?;
                if s.radii.is_empty() {
                    return Err(CliError::Config("radii must not be empty".into()));
                }
                for r in &s.radii {
                    positive("radius", *r)?;
                }
            }
            Suite::MaxpotConvergence(s) => {
                at_least("battery", s.battery, 1)?;
                at_least("nu_atoms", s.nu_atoms, 1)?;
                at_least("max_grid_atoms", s.max_grid_atoms, 1)?;
                at_least("sample_n", s.sample_n, 2)?;
                let inside = s.battery_in_grid.unwrap_or(s.battery);
                if inside > s.battery || inside > s.grid_size {
                    return Err(CliError::Config("battery_in_grid exceeds battery or grid_size".into()));
                }
                at_least("grid_size", s.grid_size, 1)?;
                positive("radius", s.radius)?;
                positive("support", s.support)?;
                if !(s.eps > 0.0 && s.eps < 1.0) {
                    return Err(CliError::Config(format!("eps must lie in (0, 1), got {}", s.eps)));
                }
            }
            Suite::BoasSuite(s) => {
                if s.presets.is_empty() {
                    return Err(CliError::Config("presets must not be empty".into()));
                }
                for pr in &s.presets {
                    for (n, v) in [("p_conj", pr.p_conj), ("r", pr.r), ("s", pr.s), ("q", pr.q)] {
                        if !(v > 1.0 && v.is_finite()) {
                            return Err(CliError::Config(format!("preset {n} = {v} outside (1, inf)")));
                        }
                    }
                    wslab_core::energy::BoasParams::new(pr.r, pr.s)
                        .and_then(|b| b.check_sobolev_range(pr.q))
                        .map_err(|e| CliError::Config(e.to_string()))?;
                }
                at_least("pairs", s.pairs, 1)?;
                at_least("meta_atoms", s.meta_atoms, 1)?;
                at_least("measure_atoms", s.measure_atoms, 1)?;
            }
            Suite::ProjectionConvergence(s) => {
                at_least("mu_atoms", s.mu_atoms, 1)?;
                at_least("nu_atoms", s.nu_atoms, 1)?;
                positive("support", s.support)?;
                wslab_core::approx::truncate_norm(&self.cost.norm, d).map_err(|e| CliError::Config(e.to_string()))?;
            }
            Suite::ModulusProbe(s) => {
                for (n, v) in [("q", s.q), ("t", s.t)] {
                    if !(v > 1.0 && v.is_finite()) {
                        return Err(CliError::Config(format!("{n} = {v} outside (1, inf)")));
                    }
                }
                at_least("trials", s.trials, 1)?;
                at_least("meta_atoms", s.meta_atoms, 1)?;
                at_least("measure_atoms", s.measure_atoms, 1)?;
            }
        }
        Ok(())
    }
}
