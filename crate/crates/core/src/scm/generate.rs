use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ScmConfig, ScmError};
use crate::math::sigmoid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TouchEvent {
    pub touch_id: String,
    pub cluster_id: usize,
    pub timestamp: u64,
    pub proxy_score: f64,
}

/// One user's observational record. Latent draws live in a [`LatentStore`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Episode {
    pub user_id: String,
    pub x: Vec<f64>,
    pub touches: Vec<TouchEvent>,
    pub y: u8,
    pub latent_handle: String,
}

impl Episode {
    pub fn clusters(&self) -> Vec<usize> {
        self.touches.iter().map(|t| t.cluster_id).collect()
    }

    /// Copy of the episode with touch `j` removed.
    pub fn without(&self, j: usize) -> Episode {
        let mut ep = self.clone();
        ep.touches.remove(j);
        ep
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Latent {
    pub w: f64,
    pub m: f64,
    /// Standardized mediator noise.
    pub eps: f64,
}

/// Sealed latent draws, only for oracle and evaluation code.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatentStore {
    pub entries: BTreeMap<String, Latent>,
}

impl LatentStore {
    pub fn get(&self, handle: &str) -> Option<&Latent> {
        self.entries.get(handle)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub episodes: Vec<Episode>,
    pub latents: LatentStore,
}

pub(crate) fn episode_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn generate(config: &ScmConfig, n: usize) -> Result<Generated, ScmError> {
    config.validate()?;
    if n == 0 {
        return Err(ScmError::Config {
            field: "n",
            reason: "must be at least 1".into(),
        });
    }
    let sampler = Sampler::new(config);
    let mut episodes = Vec::with_capacity(n);
    let mut latents = LatentStore::default();
    for i in 0..n {
        let (ep, lat) = sampler.episode(i);
        latents.entries.insert(ep.latent_handle.clone(), lat);
        episodes.push(ep);
    }
    Ok(Generated { episodes, latents })
}

struct Sampler<'a> {
    cfg: &'a ScmConfig,
    beta_mean: f64,
}

impl<'a> Sampler<'a> {
    fn new(cfg: &'a ScmConfig) -> Self {
        Self {
            cfg,
            beta_mean: cfg.mean_beta_tm(),
        }
    }

    fn episode(&self, i: usize) -> (Episode, Latent) {
        let cfg = self.cfg;
        let mut rng = episode_rng(cfg.seed, i as u64);
        let x: Vec<f64> = (0..cfg.d_x).map(|_| rng.sample(StandardNormal)).collect();
        let w: f64 = rng.sample(StandardNormal);
        let len = rng.random_range(cfg.seq_len_range.min..=cfg.seq_len_range.max);

        let logits: Vec<f64> = (0..cfg.n_clusters)
            .map(|c| {
                let bx: f64 = x.iter().enumerate().map(|(k, xk)| cfg.x_loading(c, k) * xk).sum();
                cfg.popularity(c) + cfg.beta_w * cfg.w_loading(c) * w + cfg.beta_xt * bx
            })
            .collect();
        let probs = crate::math::softmax(&logits);

        let mut clusters = Vec::with_capacity(len);
        let mut stamps = Vec::with_capacity(len);
        let mut ts: u64 = rng.random_range(0..1000);
        for _ in 0..len {
            clusters.push(sample_categorical(&mut rng, &probs));
            ts += rng.random_range(1..=60);
            stamps.push(ts);
        }

        let eps: f64 = rng.sample(StandardNormal);
        let m = sigmoid(cfg.mediator_index(&x, &clusters)) + cfg.mediator_noise * eps;
        let logit = cfg.outcome_offset(&x) + cfg.beta_my * m + cfg.beta_w * w;
        let y = u8::from(rng.random::<f64>() < sigmoid(logit));

        let user_id = format!("u{i:07}");
        let touches = clusters
            .iter()
            .zip(&stamps)
            .enumerate()
            .map(|(j, (&c, &timestamp))| {
                let signal = sigmoid(cfg.proxy_sharpness * (cfg.beta_tm[c] - self.beta_mean + eps));
                let noise: f64 = rng.random();
                let raw = cfg.proxy_relevance * signal
                    + (1.0 - cfg.proxy_relevance) * noise
                    + cfg.proxy_leakage * f64::from(y);
                TouchEvent {
                    touch_id: format!("{user_id}-{j}"),
                    cluster_id: c,
                    timestamp,
                    proxy_score: raw.clamp(0.0, 1.0),
                }
            })
            .collect();

        let ep = Episode {
            user_id,
            x,
            touches,
            y,
            latent_handle: format!("L{i:08}"),
        };
        (ep, Latent { w, m, eps })
    }
}

fn sample_categorical(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return c;
        }
    }
    probs.len() - 1
}
