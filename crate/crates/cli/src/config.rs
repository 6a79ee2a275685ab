//! Experiment configuration files.
//!
//! ```toml
//! scenario = "reference_osa.toml"   # relative to this file, or "builtin:reference-osa"
//! algorithm = "dloe"                # dloe, dlc, oracle or random
//! exploration = [152, 608]          # one run per entry: numbers, "log" or "power";
//!                                   # omitted: the constant implied by the scenario's gap
//! a = 2
//! b = 2
//! c = 2
//! horizon = 500000
//! seeds = 10
//! master_seed = 1
//!
//! [costs]
//! c_cmp = 100.0
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use resshare::allocation::{optimal_assignment, optimal_symmetric};
use resshare::constants::{exploration_constant, ModelKind};
use resshare::dlc::DlcConfig;
use resshare::dloe::{DloeConfig, UpdatePolicy};
use resshare::plan::{ExplorationPlan, PlanKind};
use resshare::schedule::{BlockParams, ExplorationSchedule};
use resshare::sim::{Algorithm, UnitCosts};
use resshare::Scenario;
use serde::{Deserialize, Serialize};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "RESSHARE_OUT";

pub const DEFAULT_CHECKPOINTS: [u64; 5] = [100, 1_000, 10_000, 100_000, 500_000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmName {
    Dloe,
    Dlc,
    Oracle,
    Random,
}

impl std::str::FromStr for AlgorithmName {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "dloe" => Self::Dloe,
            "dlc" => Self::Dlc,
            "oracle" => Self::Oracle,
            "random" => Self::Random,
            other => bail!("unknown algorithm {other:?} (expected dloe, dlc, oracle or random)"),
        })
    }
}

/// Where the scenario comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    /// A file path, or `builtin:reference-osa`.
    Path(String),
    /// The scenario table written inline.
    Inline(toml::Table),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioRef,
    pub algorithm: AlgorithmName,
    #[serde(default)]
    pub exploration: Vec<ExplorationSchedule>,
    #[serde(default = "two")]
    pub a: u64,
    #[serde(default = "two")]
    pub b: u64,
    #[serde(default = "two")]
    pub c: u64,
    pub horizon: u64,
    #[serde(default = "ten")]
    pub seeds: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub costs: UnitCosts,
    #[serde(default)]
    pub plan: PlanKind,
    #[serde(default)]
    pub update: UpdatePolicy,
    /// Defaults to powers of ten plus 5e5, up to the horizon.
    #[serde(default)]
    pub checkpoints: Option<Vec<u64>>,
    /// 1-based user whose channel shares are reported.
    #[serde(default = "one")]
    pub share_user: usize,
    #[serde(default)]
    pub save_traces: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Directory that relative scenario paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn one() -> usize {
    1
}

fn two() -> u64 {
    2
}

fn ten() -> u64 {
    10
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut config: Self = toml::from_str(text).context("invalid experiment config")?;
        config.base_dir = base_dir.into();
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base)
    }

    /// A config for the builtin reference scenario.
    pub fn reference(algorithm: AlgorithmName, exploration: Vec<ExplorationSchedule>, horizon: u64, seeds: u64) -> Self {
        Self {
            scenario: ScenarioRef::Path("builtin:reference-osa".into()),
            algorithm,
            exploration,
            a: 2,
            b: 2,
            c: 2,
            horizon,
            seeds,
            master_seed: 0,
            costs: UnitCosts::default(),
            plan: PlanKind::Full,
            update: UpdatePolicy::AllBlocks,
            checkpoints: None,
            share_user: 1,
            save_traces: false,
            out: None,
            base_dir: PathBuf::new(),
        }
    }

    pub fn load_scenario(&self) -> Result<Scenario> {
        match &self.scenario {
            ScenarioRef::Path(p) if p == "builtin:reference-osa" => Ok(Scenario::reference_osa()),
            ScenarioRef::Path(p) => {
                let path = self.base_dir.join(p);
                Ok(Scenario::from_path(&path).with_context(|| format!("scenario {}", path.display()))?)
            }
            ScenarioRef::Inline(table) => {
                let text = toml::to_string(table)?;
                Ok(Scenario::from_toml_str(&text).context("inline scenario")?)
            }
        }
    }

    pub fn checkpoints(&self) -> Vec<u64> {
        match &self.checkpoints {
            Some(c) => c.clone(),
            None => DEFAULT_CHECKPOINTS.iter().copied().filter(|&t| t <= self.horizon).collect(),
        }
    }

    pub fn blocks(&self, schedule: ExplorationSchedule) -> BlockParams {
        BlockParams {
            a: self.a,
            b: self.b,
            c: self.c,
            schedule,
        }
    }

    pub fn algorithm(&self, schedule: ExplorationSchedule) -> Algorithm {
        match self.algorithm {
            AlgorithmName::Dloe => Algorithm::Dloe(DloeConfig {
                blocks: self.blocks(schedule),
                update: self.update,
            }),
            AlgorithmName::Dlc => Algorithm::Dlc(DlcConfig {
                blocks: self.blocks(schedule),
            }),
            AlgorithmName::Oracle => Algorithm::Oracle,
            AlgorithmName::Random => Algorithm::Random,
        }
    }

    /// Whether the algorithm uses blocks; other policies run once regardless of `exploration`.
    pub fn learns(&self) -> bool {
        matches!(self.algorithm, AlgorithmName::Dloe | AlgorithmName::Dlc)
    }

    /// The configured exploration settings, or the constant implied by the
    /// scenario's gap (with the Markov threshold for Markov resources).
    pub fn schedules(&self, scenario: &Scenario) -> Result<Vec<ExplorationSchedule>> {
        if !self.exploration.is_empty() {
            return Ok(self.exploration.clone());
        }
        let epsilon = if scenario.is_user_specific() {
            optimal_assignment(&scenario.user_mean_table()?)?.epsilon
        } else {
            optimal_symmetric(&scenario.mean_table()?)?.epsilon
        };
        let markov = scenario.markov_bound_params()?;
        let kind = match &markov {
            Some(p) => ModelKind::Markov(p),
            None => ModelKind::Iid,
        };
        let l = if epsilon.is_finite() { exploration_constant(epsilon, kind)? } else { 1 };
        Ok(vec![ExplorationSchedule::Constant(l as f64)])
    }

    /// Checks everything that can be checked before running. Returns the loaded scenario.
    pub fn validate(&self) -> Result<Scenario> {
        let scenario = self.load_scenario()?;
        if self.horizon == 0 {
            bail!("horizon must be at least 1");
        }
        if self.seeds == 0 {
            bail!("seeds must be at least 1");
        }
        if self.learns() {
            self.blocks(ExplorationSchedule::Log).validate()?;
            let plan = ExplorationPlan::build(self.plan, scenario.users(), scenario.resource_count())?;
            if self.horizon < plan.len() as u64 {
                bail!("horizon {} is shorter than one exploration pass ({} slots)", self.horizon, plan.len());
            }
        }
        if self.algorithm == AlgorithmName::Dloe && scenario.is_user_specific() {
            bail!("dloe needs user-independent rewards; use dlc for this scenario");
        }
        let cps = self.checkpoints();
        if cps.windows(2).any(|w| w[0] >= w[1]) || cps.iter().any(|&t| t == 0 || t > self.horizon) {
            bail!("checkpoints must increase strictly within 1..={}", self.horizon);
        }
        if self.share_user == 0 || self.share_user > scenario.users() {
            bail!("share_user must be between 1 and {}", scenario.users());
        }
        let c = self.costs;
        if [c.c_cmp, c.c_swc, c.c_com, c.c_i].iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            bail!("unit costs must be finite and nonnegative");
        }
        Ok(scenario)
    }
}
