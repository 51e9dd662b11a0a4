// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration: one TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use budgetmech::submodular::{FamilyKind, GammaMode, OptimumOracle, PaymentRule, SubmodularFamily};
use budgetmech::StandardRule;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    EnvyFree,
    #[default]
    Truthful,
    /// Truthful fractional outcome rounded to an integral purchase.
    TruthfulRounded,
    PostedPrice,
    Oracle,
    Poly,
}

impl MechanismKind {
    pub fn is_submodular(self) -> bool {
        matches!(self, MechanismKind::Oracle | MechanismKind::Poly)
    }
}

/// Which optimum the oracle mechanism consults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleChoice {
    #[default]
    Exhaustive,
    Greedy,
    PartialEnumeration,
}

impl From<OracleChoice> for OptimumOracle {
    fn from(c: OracleChoice) -> Self {
        match c {
            OracleChoice::Exhaustive => OptimumOracle::Exhaustive,
            OracleChoice::Greedy => OptimumOracle::Gamma(GammaMode::Greedy),
            OracleChoice::PartialEnumeration => OptimumOracle::Gamma(GammaMode::PartialEnumeration),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MechanismConfig {
    pub name: MechanismKind,
    /// Rule name: uniform, log, linear, step:T or tabulated:PATH.
    pub rule: String,
    /// Budget held back: before rounding, or by the strict wrapper of the submodular mechanisms.
    pub epsilon: f64,
    pub oracle: OracleChoice,
    pub payments: PaymentRule,
    /// Posted price; defaults to (e-2)/(e-1).
    pub price: Option<f64>,
}

impl Default for MechanismConfig {
    fn default() -> Self {
        MechanismConfig {
            name: MechanismKind::Truthful,
            rule: "log".into(),
            epsilon: 0.0,
            oracle: OracleChoice::Exhaustive,
            payments: PaymentRule::Original,
            price: None,
        }
    }
}

impl MechanismConfig {
    pub fn parsed_rule(&self) -> Result<StandardRule> {
        StandardRule::parse(&self.rule).with_context(|| format!("rule `{}`", self.rule))
    }
}

fn one() -> f64 {
    1.0
}

fn default_grid_points() -> usize {
    201
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum InstanceSource {
    /// A market JSON file, as written by `probe` or `MarketInstance::to_json`.
    File {
        path: PathBuf,
    },
    Generator {
        n: usize,
        theta: f64,
        #[serde(default = "one")]
        utility_min: f64,
        #[serde(default = "one")]
        utility_max: f64,
    },
    Hardness {
        n: usize,
    },
    Probe {
        rule: String,
        beta: f64,
        m: usize,
        #[serde(default = "default_grid_points")]
        grid_points: usize,
    },
    /// Random submodular instance from a built-in family.
    SubmodularRandom {
        family: FamilyKind,
        n: usize,
        budget_fraction: f64,
    },
    /// Submodular instance listed in full.
    Submodular {
        costs: Vec<f64>,
        budget: f64,
        value: SubmodularFamily,
    },
}

impl Default for InstanceSource {
    fn default() -> Self {
        InstanceSource::Generator { n: 100, theta: 0.05, utility_min: 1.0, utility_max: 1.0 }
    }
}

impl InstanceSource {
    pub fn is_submodular(&self) -> bool {
        matches!(self, InstanceSource::SubmodularRandom { .. } | InstanceSource::Submodular { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Largeness values; each cell regenerates the instance at that θ.
    pub thetas: Vec<f64>,
    /// Step heights t; each cell runs Step(t).
    pub steps: Vec<f64>,
    /// Group scale of the two-group probe in each step cell.
    pub probe_m: usize,
    pub grid_points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            thetas: vec![1.0 / 10.0, 1.0 / 20.0, 1.0 / 40.0, 1.0 / 80.0, 1.0 / 160.0],
            steps: Vec::new(),
            probe_m: 10_000,
            grid_points: 201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub multipliers: Vec<f64>,
    pub absolute: Vec<f64>,
    pub tol: f64,
    /// Random triples per instance for the submodularity spot check.
    pub submodularity_trials: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        let grid = budgetmech::audit::MisreportGrid::default();
        AuditConfig {
            multipliers: grid.multipliers,
            absolute: grid.absolute,
            tol: budgetmech::audit::DEFAULT_TOL,
            submodularity_trials: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardnessConfig {
    pub n: usize,
}

impl Default for HardnessConfig {
    fn default() -> Self {
        HardnessConfig { n: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub beta: f64,
    pub m: usize,
    pub grid_points: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { beta: 0.51, m: 10_000, grid_points: 201 }
    }
}

/// Everything a command needs; equal configs give identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub out: Option<PathBuf>,
    pub format: Format,
    /// Exit with status 2 when an audit fails.
    pub strict: bool,
    /// Also write one row per seller.
    pub per_seller: bool,
    pub mechanism: MechanismConfig,
    pub instance: InstanceSource,
    pub sweep: SweepConfig,
    pub audit: AuditConfig,
    pub hardness: HardnessConfig,
    pub probe: ProbeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            trials: 1,
            out: None,
            format: Format::Csv,
            strict: false,
            per_seller: false,
            mechanism: MechanismConfig::default(),
            instance: InstanceSource::default(),
            sweep: SweepConfig::default(),
            audit: AuditConfig::default(),
            hardness: HardnessConfig::default(),
            probe: ProbeConfig::default(),
        }
    }
}

/// Values given on the command line; each one replaces the file's value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub mechanism: Option<MechanismKind>,
    pub rule: Option<String>,
    pub trials: Option<usize>,
    pub format: Option<Format>,
    pub strict: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(m) = o.mechanism {
            self.mechanism.name = m;
        }
        if let Some(r) = &o.rule {
            self.mechanism.rule = r.clone();
        }
        if let Some(t) = o.trials {
            self.trials = t;
        }
        if let Some(f) = o.format {
            self.format = f;
        }
        self.strict |= o.strict;
    }

    /// Range checks that would otherwise surface deep inside a command.
    pub fn validate(&self) -> Result<()> {
        let m = &self.mechanism;
        if !m.name.is_submodular() && m.name != MechanismKind::PostedPrice {
            m.parsed_rule()?;
        }
        if !(0.0..1.0).contains(&m.epsilon) {
            bail!("mechanism.epsilon must lie in [0, 1), got {}", m.epsilon);
        }
        if let Some(p) = m.price {
            if !(p.is_finite() && p >= 0.0) {
                bail!("mechanism.price must be finite and nonnegative, got {p}");
            }
        }
        // Additive markets can feed the submodular mechanisms, not the other way round.
        if self.instance.is_submodular() && !m.name.is_submodular() {
            bail!("mechanism `{:?}` needs an additive market, not a submodular instance", m.name);
        }
        if self.sweep.thetas.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            bail!("sweep.thetas must lie in (0, 1]");
        }
        if self.sweep.steps.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            bail!("sweep.steps must lie in (0, 1)");
        }
        if !(self.probe.beta > 0.0 && self.probe.beta < 1.0) {
            bail!("probe.beta must lie in (0, 1), got {}", self.probe.beta);
        }
        if self.probe.m == 0 || self.sweep.probe_m == 0 {
            bail!("probe group scale must be positive");
        }
        if self.hardness.n == 0 {
            bail!("hardness.n must be positive");
        }
        Ok(())
    }
}
