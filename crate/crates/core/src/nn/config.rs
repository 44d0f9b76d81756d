use serde::{Deserialize, Serialize};

use super::NnError;

/// Shape of the ramp from zero to the target reversal strength.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrlSchedule {
    /// Linear over the first `fraction` of the annealing stage, then flat.
    Linear { target: f64, fraction: f64 },
    Constant { target: f64 },
}

impl GrlSchedule {
    /// Multiplier in `[0, 1]` at `progress` in `[0, 1]` through the stage.
    pub fn curve(&self, progress: f64) -> f64 {
        match *self {
            GrlSchedule::Linear { fraction, .. } => {
                if fraction <= 0.0 {
                    1.0
                } else {
                    (progress / fraction).clamp(0.0, 1.0)
                }
            }
            GrlSchedule::Constant { .. } => 1.0,
        }
    }

    pub fn target(&self) -> f64 {
        match *self {
            GrlSchedule::Linear { target, .. } | GrlSchedule::Constant { target } => target,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub backbone_widths: Vec<usize>,
    pub mediator_dim: usize,
    pub lambda_dml: f64,
    pub lambda_adv: f64,
    pub lambda_reg: f64,
    pub lambda_ctr: f64,
    pub tau_ctr: f64,
    pub top_k: usize,
    pub grl_schedule: GrlSchedule,
    pub lr_dense: f64,
    pub lr_sparse: f64,
    pub seed: u64,

    #[serde(default = "defaults::one")]
    pub lambda_proxy: f64,
    /// Equal-width bins of the proxy score used as contrastive signatures.
    #[serde(default = "defaults::proxy_bins")]
    pub proxy_bins: usize,
    /// Proxy scores at or above this value are positive proxy labels.
    #[serde(default = "defaults::half")]
    pub proxy_threshold: f64,
    #[serde(default = "defaults::sixteen")]
    pub ctr_dim: usize,
    #[serde(default = "defaults::sixteen")]
    pub adv_hidden: usize,
    /// Adds a skip connection from the first to the last hidden layer.
    #[serde(default)]
    pub residual: bool,
    /// Stored treatment sequences over which inference marginalizes the context.
    #[serde(default = "defaults::references")]
    pub n_references: usize,
    /// Score with the context marginalized over references instead of the
    /// episode's own context.
    #[serde(default = "defaults::yes")]
    pub frontdoor_inference: bool,
    /// Pass-through fraction of the main-loss gradient into the mediator channel.
    #[serde(default)]
    pub main_to_mediator: f64,
    /// Pass-through fraction of the proxy-loss gradient into the backbone.
    #[serde(default = "defaults::one")]
    pub proxy_to_backbone: f64,
    /// Pass-through fraction of the contrastive-loss gradient into the backbone.
    #[serde(default)]
    pub ctr_to_backbone: f64,
    #[serde(default = "defaults::yes")]
    pub use_ipw: bool,
    /// Multiplier on `lr_dense` for the adversary's own parameters.
    #[serde(default = "defaults::one")]
    pub lr_adv_scale: f64,
}

mod defaults {
    pub fn one() -> f64 {
        1.0
    }
    pub fn half() -> f64 {
        0.5
    }
    pub fn proxy_bins() -> usize {
        11
    }
    pub fn sixteen() -> usize {
        16
    }
    pub fn references() -> usize {
        64
    }
    pub fn yes() -> bool {
        true
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            backbone_widths: vec![32, 16],
            mediator_dim: 8,
            lambda_dml: 1.0,
            lambda_adv: 4.0,
            lambda_reg: 1e-4,
            lambda_ctr: 0.1,
            tau_ctr: 0.1,
            top_k: 5,
            grl_schedule: GrlSchedule::Linear {
                target: 1.0,
                fraction: 0.5,
            },
            lr_dense: 1e-5,
            lr_sparse: 5e-4,
            seed: 0,
            lambda_proxy: 1.0,
            proxy_bins: 11,
            proxy_threshold: 0.5,
            ctr_dim: 16,
            adv_hidden: 16,
            residual: false,
            n_references: 64,
            frontdoor_inference: true,
            main_to_mediator: 0.0,
            proxy_to_backbone: 1.0,
            ctr_to_backbone: 0.0,
            use_ipw: true,
            lr_adv_scale: 1.0,
        }
    }
}

impl ModelConfig {
    /// Plain sequence model with the same architecture: own-context scoring,
    /// no weighting and no auxiliary heads.
    pub fn naive(&self) -> Self {
        Self {
            lambda_dml: 0.0,
            lambda_adv: 0.0,
            lambda_ctr: 0.0,
            lambda_proxy: 0.0,
            frontdoor_inference: false,
            main_to_mediator: 1.0,
            use_ipw: false,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |field: &'static str, reason: &str| {
            Err(NnError::Config {
                field,
                reason: reason.to_string(),
            })
        };
        if self.embed_dim == 0 || self.mediator_dim == 0 || self.ctr_dim == 0 || self.adv_hidden == 0 {
            return bad("embed_dim", "all widths must be >= 1");
        }
        if self.backbone_widths.is_empty() || self.backbone_widths.contains(&0) {
            return bad("backbone_widths", "need at least one layer, all widths >= 1");
        }
        if !(self.tau_ctr > 0.0) {
            return bad("tau_ctr", "must be > 0");
        }
        if self.top_k == 0 {
            return bad("top_k", "must be >= 1");
        }
        if self.proxy_bins < 2 {
            return bad("proxy_bins", "must be >= 2");
        }
        for (f, v) in [
            ("lambda_dml", self.lambda_dml),
            ("lambda_adv", self.lambda_adv),
            ("lambda_reg", self.lambda_reg),
            ("lambda_ctr", self.lambda_ctr),
            ("lambda_proxy", self.lambda_proxy),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(f, "loss coefficients must be finite and >= 0");
            }
        }
        if !(self.grl_schedule.target().is_finite() && self.grl_schedule.target() >= 0.0) {
            return bad("grl_schedule", "target must be finite and >= 0");
        }
        if !(self.lr_dense > 0.0 && self.lr_sparse > 0.0) {
            return bad("lr_dense", "learning rates must be > 0");
        }
        if !(self.lr_adv_scale > 0.0 && self.lr_adv_scale.is_finite()) {
            return bad("lr_adv_scale", "must be finite and > 0");
        }
        for (f, v) in [
            ("main_to_mediator", self.main_to_mediator),
            ("proxy_to_backbone", self.proxy_to_backbone),
            ("ctr_to_backbone", self.ctr_to_backbone),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(f, "pass-through fractions lie in [0, 1]");
            }
        }
        Ok(())
    }

    pub fn hidden_out(&self) -> usize {
        *self.backbone_widths.last().expect("validated")
    }

    pub fn proxy_bin(&self, score: f64) -> usize {
        ((score.clamp(0.0, 1.0) * self.proxy_bins as f64) as usize).min(self.proxy_bins - 1)
    }
}
