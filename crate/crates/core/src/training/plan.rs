use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::estimators::IpwConfig;

/// Ramp from 0 to 1 over the annealing stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnnealCurve {
    /// Linear over the first `fraction` of the stage, then flat at 1.
    Linear { fraction: f64 },
    /// Full strength from the first step.
    Step,
}

impl AnnealCurve {
    pub fn at(&self, progress: f64) -> f64 {
        match *self {
            AnnealCurve::Linear { fraction } if fraction > 0.0 => (progress / fraction).clamp(0.0, 1.0),
            AnnealCurve::Linear { .. } | AnnealCurve::Step => {
                if progress > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSteps {
    pub warmup: u64,
    pub proxy: u64,
    pub anneal: u64,
}

impl StageSteps {
    pub fn total(&self) -> u64 {
        self.warmup + self.proxy + self.anneal
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainPlan {
    pub stage_steps: StageSteps,
    pub batch_size: usize,
    /// Target magnitudes of main : DML : adversarial : regularization : contrastive.
    pub target_ratio: [f64; 5],
    /// Multiplicative tolerance around each target ratio.
    pub ratio_band: f64,
    pub anneal_curve: AnnealCurve,
    pub seeds: Vec<u64>,
    pub ipw: IpwConfig,
    #[serde(default = "defaults::log_every")]
    pub log_every: u64,
    /// Steps between warm-up AUC evaluations; 0 disables early exit.
    #[serde(default = "defaults::eval_every")]
    pub eval_every: u64,
    /// Relative AUC change under which a warm-up window counts as stable.
    #[serde(default = "defaults::warmup_tol")]
    pub warmup_tol: f64,
    /// Episodes used to monitor AUC during warm-up.
    #[serde(default = "defaults::monitor")]
    pub monitor_size: usize,
}

mod defaults {
    pub fn log_every() -> u64 {
        10
    }
    pub fn eval_every() -> u64 {
        100
    }
    pub fn warmup_tol() -> f64 {
        0.002
    }
    pub fn monitor() -> usize {
        2000
    }
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            stage_steps: StageSteps {
                warmup: 600,
                proxy: 600,
                anneal: 1200,
            },
            batch_size: 128,
            target_ratio: [1.0, 0.6, 4.0, 0.1, 0.2],
            ratio_band: 10.0,
            anneal_curve: AnnealCurve::Linear { fraction: 0.5 },
            seeds: vec![10, 100, 1000],
            ipw: IpwConfig {
                normalize: true,
                ..IpwConfig::default()
            },
            log_every: defaults::log_every(),
            eval_every: defaults::eval_every(),
            warmup_tol: defaults::warmup_tol(),
            monitor_size: defaults::monitor(),
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.target_ratio.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || self.target_ratio[0] <= 0.0 {
            return bad("target_ratio entries must be finite and >= 0, main > 0");
        }
        if !(self.ratio_band >= 1.0) {
            return bad("ratio_band must be >= 1");
        }
        if let AnnealCurve::Linear { fraction } = self.anneal_curve {
            if !(0.0..=1.0).contains(&fraction) {
                return bad("anneal fraction must lie in [0, 1]");
            }
        }
        if self.log_every == 0 {
            return bad("log_every must be >= 1");
        }
        if !(self.warmup_tol >= 0.0) {
            return bad("warmup_tol must be >= 0");
        }
        self.ipw.validate().map_err(|e| TrainError::Config(e.to_string()))
    }
}
