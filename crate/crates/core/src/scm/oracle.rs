use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::config::MAX_ENUMERATED_STATES;
use super::{Episode, ScmConfig, ScmError};
use crate::digest::sub_seed;
use crate::math::sigmoid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleMethod {
    Enumeration,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub p: f64,
    /// Zero for enumeration.
    pub std_err: f64,
    pub method: OracleMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub p_do_full: f64,
    pub p_do_minus: Vec<f64>,
    pub true_uplift: Vec<f64>,
}

enum Quadrature {
    /// Equiprobable quantile-bin conditional means of a standard normal.
    Grid(Vec<f64>),
    /// Joint `(w, eps)` draws.
    Draws(Vec<(f64, f64)>),
}

/// Interventional oracle: `P(Y=1 | do(T=t), X=x)` with `W` and the mediator
/// noise integrated out. Cutting the edges into `T` just means fixing `t`.
pub struct Oracle {
    cfg: ScmConfig,
    quad: Quadrature,
}

/// Conditional means of a standard normal within `g` equiprobable bins.
pub fn quantile_bin_means(g: usize) -> Vec<f64> {
    let n = Normal::standard();
    let edges: Vec<f64> = (0..=g)
        .map(|i| match i {
            0 => f64::NEG_INFINITY,
            i if i == g => f64::INFINITY,
            i => n.inverse_cdf(i as f64 / g as f64),
        })
        .collect();
    let pdf = |z: f64| if z.is_finite() { n.pdf(z) } else { 0.0 };
    (0..g)
        .map(|i| g as f64 * (pdf(edges[i]) - pdf(edges[i + 1])))
        .collect()
}

impl Oracle {
    pub fn new(config: &ScmConfig) -> Result<Self, ScmError> {
        config.validate()?;
        let g = config.oracle_grid;
        let quad = if g.checked_mul(g).is_some_and(|s| s <= MAX_ENUMERATED_STATES) {
            Quadrature::Grid(quantile_bin_means(g))
        } else if config.oracle_mc_draws > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, "oracle"));
            let draws = (0..config.oracle_mc_draws)
                .map(|_| (rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            Quadrature::Draws(draws)
        } else {
            return Err(ScmError::Capability(format!(
                "latent grid of {g}x{g} states exceeds {MAX_ENUMERATED_STATES} and the Monte-Carlo budget is 0"
            )));
        };
        Ok(Self {
            cfg: config.clone(),
            quad,
        })
    }

    pub fn config(&self) -> &ScmConfig {
        &self.cfg
    }

    pub fn do_expectation(&self, x: &[f64], t: &[usize]) -> Result<OracleValue, ScmError> {
        let cfg = &self.cfg;
        if x.len() != cfg.d_x {
            return Err(ScmError::Config {
                field: "x",
                reason: format!("expected {} covariates, got {}", cfg.d_x, x.len()),
            });
        }
        if let Some(&bad) = t.iter().find(|&&c| c >= cfg.n_clusters) {
            return Err(ScmError::InvalidCluster {
                cluster: bad,
                n_clusters: cfg.n_clusters,
            });
        }
        let base = cfg.outcome_offset(x) + cfg.beta_my * sigmoid(cfg.mediator_index(x, t));
        let a = cfg.beta_w;
        let b = cfg.beta_my * cfg.mediator_noise;
        Ok(match &self.quad {
            Quadrature::Grid(z) => {
                let mut total = 0.0;
                for &zw in z {
                    let row = base + a * zw;
                    for &ze in z {
                        total += sigmoid(row + b * ze);
                    }
                }
                OracleValue {
                    p: total / (z.len() * z.len()) as f64,
                    std_err: 0.0,
                    method: OracleMethod::Enumeration,
                }
            }
            Quadrature::Draws(d) => {
                let n = d.len() as f64;
                let (mut s, mut s2) = (0.0, 0.0);
                for &(w, e) in d {
                    let p = sigmoid(base + a * w + b * e);
                    s += p;
                    s2 += p * p;
                }
                let mean = s / n;
                let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
                OracleValue {
                    p: mean,
                    std_err: (var / n).sqrt(),
                    method: OracleMethod::MonteCarlo,
                }
            }
        })
    }

    pub fn p_do(&self, x: &[f64], t: &[usize]) -> Result<f64, ScmError> {
        Ok(self.do_expectation(x, t)?.p)
    }

    pub fn uplift(&self, ep: &Episode) -> Result<GroundTruth, ScmError> {
        let t = ep.clusters();
        let p_do_full = self.p_do(&ep.x, &t)?;
        let mut p_do_minus = Vec::with_capacity(t.len());
        for j in 0..t.len() {
            let mut rest = t.clone();
            rest.remove(j);
            p_do_minus.push(self.p_do(&ep.x, &rest)?);
        }
        let true_uplift = p_do_minus.iter().map(|m| p_do_full - m).collect();
        Ok(GroundTruth {
            p_do_full,
            p_do_minus,
            true_uplift,
        })
    }

    /// Marginal `P(Y=1)` under the observational distribution, by Monte Carlo.
    pub fn observational_marginal(&self, draws: usize) -> f64 {
        let cfg = &self.cfg;
        let mut total = 0.0;
        let sampler_seed = sub_seed(cfg.seed, "marginal");
        let mut rng = ChaCha8Rng::seed_from_u64(sampler_seed);
        let probs_for = |x: &[f64], w: f64| {
            let logits: Vec<f64> = (0..cfg.n_clusters)
                .map(|c| {
                    let bx: f64 = x.iter().enumerate().map(|(k, xk)| cfg.x_loading(c, k) * xk).sum();
                    cfg.popularity(c) + cfg.beta_w * cfg.w_loading(c) * w + cfg.beta_xt * bx
                })
                .collect();
            crate::math::softmax(&logits)
        };
        for _ in 0..draws {
            let x: Vec<f64> = (0..cfg.d_x).map(|_| rng.sample(StandardNormal)).collect();
            let w: f64 = rng.sample(StandardNormal);
            let len = rng.random_range(cfg.seq_len_range.min..=cfg.seq_len_range.max);
            let probs = probs_for(&x, w);
            let t: Vec<usize> = (0..len)
                .map(|_| {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    probs
                        .iter()
                        .position(|p| {
                            acc += p;
                            u < acc
                        })
                        .unwrap_or(cfg.n_clusters - 1)
                })
                .collect();
            let e: f64 = rng.sample(StandardNormal);
            let m = sigmoid(cfg.mediator_index(&x, &t)) + cfg.mediator_noise * e;
            total += sigmoid(cfg.outcome_offset(&x) + cfg.beta_my * m + cfg.beta_w * w);
        }
        total / draws as f64
    }
}

pub fn oracle_do_expectation(config: &ScmConfig, x: &[f64], t: &[usize]) -> Result<OracleValue, ScmError> {
    Oracle::new(config)?.do_expectation(x, t)
}

pub fn oracle_uplift(config: &ScmConfig, ep: &Episode) -> Result<GroundTruth, ScmError> {
    Oracle::new(config)?.uplift(ep)
}
