use serde::{Deserialize, Serialize};

use super::ScmError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqLenRange {
    pub min: usize,
    pub max: usize,
}

/// Parameters of the synthetic causal graph.
///
/// Graph: `W -> T`, `W -> Y`, `X -> T`, `X -> Y`, `T -> M -> Y`, and per touch
/// `M -> Y'` with an optional `Y -> Y'` shortcut. `W` and `M` are scalar latents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScmConfig {
    pub d_x: usize,
    pub n_clusters: usize,
    pub seq_len_range: SeqLenRange,
    /// Shared strength of the confounder on cluster choice and on the outcome.
    pub beta_w: f64,
    pub beta_tm: Vec<f64>,
    pub beta_my: f64,
    pub proxy_relevance: f64,
    pub proxy_leakage: f64,
    pub base_rate_logit: f64,
    pub seed: u64,

    /// Strength of the covariate effect on cluster choice.
    #[serde(default = "defaults::beta_xt")]
    pub beta_xt: f64,
    /// Linear covariate effect on the outcome logit.
    #[serde(default = "defaults::beta_xy")]
    pub beta_xy: f64,
    /// Coefficient of `x0^2 - 1` in the outcome logit.
    #[serde(default)]
    pub x_nonlinearity: f64,
    /// Covariate effect on the mediator.
    #[serde(default)]
    pub gamma_xm: f64,
    #[serde(default = "defaults::mediator_bias")]
    pub mediator_bias: f64,
    /// Scale of the additive mediator noise.
    #[serde(default = "defaults::mediator_noise")]
    pub mediator_noise: f64,
    /// Slope of the proxy's response to a touch's mediator contribution.
    #[serde(default = "defaults::proxy_sharpness")]
    pub proxy_sharpness: f64,
    /// Baseline cluster logits; empty means all zero.
    #[serde(default)]
    pub cluster_popularity: Vec<f64>,
    /// Per-cluster loading on the confounder; empty means `linspace(-1, 1)`.
    #[serde(default)]
    pub w_loadings: Vec<f64>,
    /// Quantile bins per latent for exact enumeration.
    #[serde(default = "defaults::oracle_grid")]
    pub oracle_grid: usize,
    /// Monte-Carlo draws used when the grid is too large to enumerate.
    #[serde(default = "defaults::oracle_mc_draws")]
    pub oracle_mc_draws: usize,
}

mod defaults {
    pub fn beta_xt() -> f64 {
        0.5
    }
    pub fn beta_xy() -> f64 {
        0.5
    }
    pub fn mediator_bias() -> f64 {
        -1.0
    }
    pub fn mediator_noise() -> f64 {
        0.1
    }
    pub fn proxy_sharpness() -> f64 {
        2.0
    }
    pub fn oracle_grid() -> usize {
        101
    }
    pub fn oracle_mc_draws() -> usize {
        1_000_000
    }
}

/// Largest joint latent grid that is enumerated exactly.
pub const MAX_ENUMERATED_STATES: usize = 1_000_000;

impl Default for ScmConfig {
    fn default() -> Self {
        let n_clusters = 6;
        Self {
            d_x: 4,
            n_clusters,
            seq_len_range: SeqLenRange { min: 1, max: 6 },
            beta_w: 1.0,
            beta_tm: (0..n_clusters).map(|c| 0.2 + 0.15 * c as f64).collect(),
            beta_my: 2.0,
            proxy_relevance: 0.8,
            proxy_leakage: 0.0,
            base_rate_logit: -1.5,
            seed: 7,
            beta_xt: defaults::beta_xt(),
            beta_xy: defaults::beta_xy(),
            x_nonlinearity: 0.0,
            gamma_xm: 0.0,
            mediator_bias: defaults::mediator_bias(),
            mediator_noise: defaults::mediator_noise(),
            proxy_sharpness: defaults::proxy_sharpness(),
            cluster_popularity: Vec::new(),
            w_loadings: Vec::new(),
            oracle_grid: defaults::oracle_grid(),
            oracle_mc_draws: defaults::oracle_mc_draws(),
        }
    }
}

fn bad(field: &'static str, reason: impl Into<String>) -> ScmError {
    ScmError::Config {
        field,
        reason: reason.into(),
    }
}

impl ScmConfig {
    pub fn validate(&self) -> Result<(), ScmError> {
        if self.n_clusters < 2 {
            return Err(bad("n_clusters", "must be at least 2"));
        }
        let r = self.seq_len_range;
        if r.min < 1 || r.min > r.max {
            return Err(bad("seq_len_range", "need 1 <= min <= max"));
        }
        if self.beta_tm.len() != self.n_clusters {
            return Err(bad(
                "beta_tm",
                format!("expected {} entries, got {}", self.n_clusters, self.beta_tm.len()),
            ));
        }
        if !(0.0..=1.0).contains(&self.proxy_relevance) {
            return Err(bad("proxy_relevance", "must lie in [0, 1]"));
        }
        if !(self.proxy_leakage >= 0.0) {
            return Err(bad("proxy_leakage", "must be >= 0"));
        }
        if !(self.mediator_noise >= 0.0) {
            return Err(bad("mediator_noise", "must be >= 0"));
        }
        if !(self.proxy_sharpness > 0.0) {
            return Err(bad("proxy_sharpness", "must be > 0"));
        }
        for (field, v) in [
            ("cluster_popularity", &self.cluster_popularity),
            ("w_loadings", &self.w_loadings),
        ] {
            if !v.is_empty() && v.len() != self.n_clusters {
                return Err(bad(field, format!("expected 0 or {} entries", self.n_clusters)));
            }
        }
        if self.oracle_grid < 2 {
            return Err(bad("oracle_grid", "must be at least 2"));
        }
        let scalars = [
            ("beta_w", self.beta_w),
            ("beta_my", self.beta_my),
            ("base_rate_logit", self.base_rate_logit),
            ("beta_xt", self.beta_xt),
            ("beta_xy", self.beta_xy),
            ("x_nonlinearity", self.x_nonlinearity),
            ("gamma_xm", self.gamma_xm),
            ("mediator_bias", self.mediator_bias),
        ];
        for (field, v) in scalars {
            if !v.is_finite() {
                return Err(bad(field, "must be finite"));
            }
        }
        let vectors = [
            ("beta_tm", &self.beta_tm),
            ("cluster_popularity", &self.cluster_popularity),
            ("w_loadings", &self.w_loadings),
        ];
        for (field, v) in vectors {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(bad(field, "entries must be finite"));
            }
        }
        Ok(())
    }

    pub fn popularity(&self, c: usize) -> f64 {
        self.cluster_popularity.get(c).copied().unwrap_or(0.0)
    }

    pub fn w_loading(&self, c: usize) -> f64 {
        match self.w_loadings.get(c) {
            Some(&a) => a,
            None => -1.0 + 2.0 * c as f64 / (self.n_clusters - 1) as f64,
        }
    }

    /// Unit direction through which `x` enters the mediator and outcome.
    pub fn x_direction(&self) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.d_x).map(|k| (0.9 * (k + 1) as f64).cos()).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            raw
        } else {
            raw.iter().map(|v| v / norm).collect()
        }
    }

    /// Loading of covariate `k` on cluster `c`'s choice logit.
    pub fn x_loading(&self, c: usize, k: usize) -> f64 {
        (1.7 * (c + 1) as f64 * (k + 1) as f64).sin()
    }

    pub fn mean_beta_tm(&self) -> f64 {
        self.beta_tm.iter().sum::<f64>() / self.n_clusters as f64
    }

    /// Pre-noise mediator index for a treatment sequence.
    pub fn mediator_index(&self, x: &[f64], clusters: &[usize]) -> f64 {
        let u = self.x_direction();
        let ux: f64 = u.iter().zip(x).map(|(a, b)| a * b).sum();
        self.mediator_bias + clusters.iter().map(|&c| self.beta_tm[c]).sum::<f64>() + self.gamma_xm * ux
    }

    /// Outcome logit excluding the mediator and confounder terms.
    pub fn outcome_offset(&self, x: &[f64]) -> f64 {
        let u = self.x_direction();
        let ux: f64 = u.iter().zip(x).map(|(a, b)| a * b).sum();
        let nl = x.first().map_or(0.0, |x0| self.x_nonlinearity * (x0 * x0 - 1.0));
        self.base_rate_logit + self.beta_xy * ux + nl
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, ScmError> {
        let cfg: ScmConfig = toml::from_str(text).map_err(|e| ScmError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Configs differing only in the proxy knobs, relevance-major order.
pub fn sensitivity_grid(
    config: &ScmConfig,
    relevance_levels: &[f64],
    leakage_levels: &[f64],
) -> Result<Vec<ScmConfig>, ScmError> {
    config.validate()?;
    let mut out = Vec::with_capacity(relevance_levels.len() * leakage_levels.len());
    for &rho in relevance_levels {
        for &leak in leakage_levels {
            let mut c = config.clone();
            c.proxy_relevance = rho;
            c.proxy_leakage = leak;
            c.validate()?;
            out.push(c);
        }
    }
    Ok(out)
}
