//! Experiment configuration file (TOML).
//!
//! Every section is optional; missing sections fall back to the built-in
//! question-answering registry, calibrated profiles and default knobs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::BanditConfig;
use crate::baseline::BaselineConfig;
use crate::dataset::{synthesize, DatasetError, DatasetSplit};
use crate::registry::{paper_qa_registry, ModuleDescriptor, ModuleRegistry, StructuralRules};
use crate::reward::RewardConfig;
use crate::simulation::{default_profiles, ExecutorProfile, ProfileRecord, TieRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("config does not parse: {0}")]
    Parse(String),
    #[error("`{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistrySection {
    #[serde(default)]
    pub rules: StructuralRules,
    pub modules: Vec<ModuleDescriptor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub tie_rule: TieRule,
    /// Overrides every profile's latency jitter when set.
    pub jitter: Option<f64>,
    pub aggregate_latency: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { tie_rule: TieRule::default(), jitter: None, aggregate_latency: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub timesteps: usize,
    pub seeds: Vec<u64>,
    pub checkpoint_interval: usize,
    /// Greedy test evaluation every this many steps; 0 disables it.
    pub eval_interval: usize,
    /// Monte Carlo passes over the test split per evaluation.
    pub eval_repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            timesteps: 3500,
            seeds: vec![0, 1, 2, 3, 4],
            checkpoint_interval: 50,
            eval_interval: 500,
            eval_repeats: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSource {
    /// JSON Lines file; when absent a split is synthesized.
    pub path: Option<PathBuf>,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for DatasetSource {
    fn default() -> Self {
        Self { path: None, n_train: 210, n_test: 51, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub registry: Option<RegistrySection>,
    pub profiles: Option<Vec<ProfileRecord>>,
    pub reward: RewardConfig,
    pub bandit: BanditConfig,
    pub baseline: BaselineConfig,
    pub simulation: SimulationConfig,
    pub experiment: RunConfig,
    pub dataset: DatasetSource,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(p) = &cfg.dataset.path {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.dataset.path = Some(dir.join(p));
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.reward.validate().map_err(|e| invalid("reward", e.to_string()))?;
        if !(self.bandit.alpha >= 0.0 && self.bandit.alpha.is_finite()) {
            return Err(invalid("bandit.alpha", "must be finite and >= 0"));
        }
        self.baseline.validate().map_err(|e| invalid("baseline", e.to_string()))?;
        if let Some(j) = self.simulation.jitter {
            if !(j >= 0.0 && j.is_finite()) {
                return Err(invalid("simulation.jitter", "must be finite and >= 0"));
            }
        }
        if !(self.simulation.aggregate_latency >= 0.0 && self.simulation.aggregate_latency.is_finite()) {
            return Err(invalid("simulation.aggregate_latency", "must be finite and >= 0"));
        }
        let run = &self.experiment;
        if run.timesteps == 0 {
            return Err(invalid("experiment.timesteps", "must be >= 1"));
        }
        if run.seeds.is_empty() {
            return Err(invalid("experiment.seeds", "needs at least one seed"));
        }
        let mut seeds = run.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != run.seeds.len() {
            return Err(invalid("experiment.seeds", "seeds must be distinct"));
        }
        if run.checkpoint_interval == 0 {
            return Err(invalid("experiment.checkpoint_interval", "must be >= 1"));
        }
        if run.eval_repeats == 0 {
            return Err(invalid("experiment.eval_repeats", "must be >= 1"));
        }
        if self.dataset.path.is_none() && (self.dataset.n_train < 3 || self.dataset.n_test < 3) {
            return Err(invalid("dataset", "n_train and n_test must be >= 3"));
        }
        let registry = self.build_registry()?;
        let profiles = self.build_profiles()?;
        for task in registry.answer_tasks() {
            for ctx in crate::simulation::ContextLabel::ALL {
                profiles.get(&task.id, ctx).map_err(|e| invalid("profiles", e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn build_registry(&self) -> Result<ModuleRegistry, ConfigError> {
        let Some(section) = &self.registry else {
            return Ok(paper_qa_registry());
        };
        let registry = ModuleRegistry::from_descriptors(section.modules.iter().cloned(), section.rules)
            .map_err(|e| invalid("registry.modules", e.to_string()))?;
        registry.validate().map_err(|e| invalid("registry", e.to_string()))?;
        Ok(registry)
    }

    pub fn build_profiles(&self) -> Result<ExecutorProfile, ConfigError> {
        let mut profiles = match &self.profiles {
            Some(records) => ExecutorProfile::from_records(records).map_err(|e| invalid("profiles", e.to_string()))?,
            None => default_profiles(),
        };
        if let Some(j) = self.simulation.jitter {
            profiles = profiles.with_jitter(j);
        }
        profiles.aggregate_latency = self.simulation.aggregate_latency;
        Ok(profiles.with_tie_rule(self.simulation.tie_rule))
    }

    pub fn load_dataset(&self) -> Result<DatasetSplit, ConfigError> {
        let split = match &self.dataset.path {
            Some(p) => DatasetSplit::load(p)?,
            None => synthesize(self.dataset.n_train, self.dataset.n_test, self.dataset.seed)?,
        };
        if split.train.is_empty() {
            return Err(invalid("dataset", "training split is empty"));
        }
        if split.test.is_empty() {
            return Err(invalid("dataset", "test split is empty"));
        }
        Ok(split)
    }
}
