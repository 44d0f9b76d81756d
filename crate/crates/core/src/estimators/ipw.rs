use serde::{Deserialize, Serialize};

use super::EstimatorError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpwConfig {
    pub p_floor: f64,
    pub p_ceil: f64,
    /// Rescale weights to mean one within each batch.
    pub normalize: bool,
}

impl Default for IpwConfig {
    fn default() -> Self {
        Self {
            p_floor: 0.01,
            p_ceil: 0.99,
            normalize: false,
        }
    }
}

impl IpwConfig {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        if !(0.0 < self.p_floor && self.p_floor < self.p_ceil && self.p_ceil <= 1.0) {
            return Err(EstimatorError::Config(format!(
                "need 0 < p_floor < p_ceil <= 1, got {} and {}",
                self.p_floor, self.p_ceil
            )));
        }
        Ok(())
    }

    pub fn is_clamped(&self, p_hat: f64) -> bool {
        p_hat < self.p_floor || p_hat > self.p_ceil
    }
}

pub fn ipw_weight(cfg: &IpwConfig, p_hat: f64) -> f64 {
    1.0 / p_hat.clamp(cfg.p_floor, cfg.p_ceil)
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightBatch {
    pub weights: Vec<f64>,
    /// How many propensities hit the floor or ceiling.
    pub clamped: usize,
}

pub fn ipw_weights(cfg: &IpwConfig, p_hat: &[f64]) -> WeightBatch {
    let mut weights: Vec<f64> = p_hat.iter().map(|&p| ipw_weight(cfg, p)).collect();
    let clamped = p_hat.iter().filter(|&&p| cfg.is_clamped(p)).count();
    if cfg.normalize && !weights.is_empty() {
        let mean = weights.iter().sum::<f64>() / weights.len() as f64;
        for w in &mut weights {
            *w /= mean;
        }
    }
    WeightBatch { weights, clamped }
}
