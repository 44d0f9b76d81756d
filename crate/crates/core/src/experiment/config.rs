use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::digest::config_hash;
use crate::nn::ModelConfig;
use crate::scm::ScmConfig;
use crate::training::TrainPlan;

/// Evaluation protocol settings shared by `eval`, `bench` and the ablations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalParams {
    /// Propensity buckets.
    pub b: usize,
    /// Shapley permutations per user.
    pub l: usize,
    pub protocol_seeds: Vec<u64>,
    /// Held-out users scored by the grouped AUUC protocol.
    pub auuc_users: usize,
    /// Episodes averaged in the attribution ranking comparison.
    pub tau_episodes: usize,
    /// Covariate cohorts used as gAUC groups.
    pub gauc_cohorts: usize,
    pub coverage_threshold: f64,
    pub relevance_levels: Vec<f64>,
    pub leakage_levels: Vec<f64>,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            b: 10,
            l: 200,
            protocol_seeds: vec![1, 2, 3, 4, 5],
            auuc_users: 1000,
            tau_episodes: 500,
            gauc_cohorts: 10,
            coverage_threshold: 0.54,
            relevance_levels: vec![0.2, 0.5, 0.8],
            leakage_levels: vec![0.0, 0.3],
        }
    }
}

/// Artifact locations, relative to the output directory unless absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub dataset: String,
    pub checkpoint: String,
    pub reports: String,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            dataset: "data".into(),
            checkpoint: "checkpoint".into(),
            reports: "reports".into(),
        }
    }
}

/// Everything a run depends on; a run is reproducible from this file alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run_id: String,
    /// Episodes generated by `gen`.
    pub n_episodes: usize,
    /// Fraction of episodes held out from training.
    pub holdout_fraction: f64,
    pub scm: ScmConfig,
    pub model: ModelConfig,
    pub plan: TrainPlan,
    #[serde(default)]
    pub eval: EvalParams,
    #[serde(default)]
    pub paths: Paths,
}

fn bad(field: &str, reason: impl Into<String>) -> ExperimentError {
    ExperimentError::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad("<file>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hash of the full config, embedded in every artifact.
    pub fn hash(&self) -> String {
        config_hash(self)
    }

    /// Hash of the data-generating part only, so datasets survive model edits.
    pub fn data_hash(&self) -> String {
        config_hash(&(&self.scm, self.n_episodes))
    }

    /// Hash of what a checkpoint depends on.
    pub fn train_hash(&self) -> String {
        config_hash(&(&self.scm, self.n_episodes, self.holdout_fraction, &self.model, &self.plan))
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.run_id.is_empty() {
            return Err(bad("run_id", "must not be empty"));
        }
        if self.n_episodes == 0 {
            return Err(bad("n_episodes", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(bad("holdout_fraction", "must lie in [0, 1)"));
        }
        self.scm.validate().map_err(|e| bad("scm", e.to_string()))?;
        self.model.validate().map_err(|e| bad("model", e.to_string()))?;
        self.plan.validate().map_err(|e| bad("plan", e.to_string()))?;
        let e = &self.eval;
        if e.b == 0 {
            return Err(bad("eval.b", "must be at least 1"));
        }
        if e.l == 0 {
            return Err(bad("eval.l", "must be at least 1"));
        }
        if e.protocol_seeds.is_empty() {
            return Err(bad("eval.protocol_seeds", "must not be empty"));
        }
        if e.gauc_cohorts == 0 {
            return Err(bad("eval.gauc_cohorts", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&e.coverage_threshold) {
            return Err(bad("eval.coverage_threshold", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Number of leading episodes used for training; the rest are held out.
    pub fn n_train(&self, n: usize) -> usize {
        let held = ((n as f64) * self.holdout_fraction).round() as usize;
        n - held.min(n.saturating_sub(1))
    }
}
