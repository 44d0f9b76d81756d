//! Attribution network: shared backbone, outcome head, proxy-supervised
//! mediator head, gradient-reversed discriminator, contrastive match head and
//! covariate propensity model.

mod batch;
mod checkpoint;
mod config;
pub mod forward;
mod params;

pub use batch::Batch;
pub use checkpoint::{CheckpointManifest, CHECKPOINT_MANIFEST, CHECKPOINT_PARAMS};
pub use config::{GrlSchedule, ModelConfig};
pub use forward::{LossParts, LossTape, LossWeights};
pub use params::{Block, Ids, Param, Params};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AutodiffError, Graph, SnapshotError, Tensor};
use crate::digest::sub_seed;
use crate::estimators::{ipw_weight, IpwConfig};
use crate::math::softmax;
use crate::scm::{Episode, TouchEvent};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("invalid model config field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("cluster id {cluster} is outside the vocabulary of {n_clusters}")]
    Vocabulary { cluster: usize, n_clusters: usize },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("contrastive batch needs at least 2 episodes, got {0}")]
    DegenerateBatch(usize),
    #[error("tape structure: {0}")]
    Structure(String),
    #[error("non-finite loss: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-touch backbone outputs and the pooled context of one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoding {
    pub touches: Vec<Vec<f64>>,
    pub attention: Vec<f64>,
    pub context: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MediatorOutput {
    /// One mediator row per touch.
    pub mhat: Vec<Vec<f64>>,
    pub proxy: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub n_clusters: usize,
    pub d_x: usize,
    pub params: Params,
    /// Treatment sequences over which inference averages the context channel.
    pub references: Vec<Vec<usize>>,
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect()
}

impl ModelState {
    pub fn new(config: ModelConfig, n_clusters: usize, d_x: usize) -> Result<Self, NnError> {
        config.validate()?;
        if n_clusters < 2 {
            return Err(NnError::Config {
                field: "n_clusters",
                reason: "need at least 2 clusters".into(),
            });
        }
        let params = Params::init(&config, n_clusters, d_x);
        Ok(Self {
            config,
            n_clusters,
            d_x,
            params,
            references: Vec::new(),
        })
    }

    /// Samples `n_references` stored sequences from `episodes`.
    pub fn set_references(&mut self, episodes: &[Episode]) {
        if episodes.is_empty() {
            self.references.clear();
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.config.seed, "references"));
        self.references = (0..self.config.n_references)
            .map(|_| episodes[rng.random_range(0..episodes.len())].clusters())
            .collect();
    }

    fn batch(&self, eps: &[&Episode]) -> Result<Batch, NnError> {
        Batch::from_episodes(eps.iter().copied(), self.n_clusters, self.d_x)
    }

    pub fn encode(&self, ep: &Episode) -> Result<Encoding, NnError> {
        let batch = self.batch(&[ep])?;
        let mut g = Graph::new();
        let b = forward::Bound::new(&mut g, &self.params)?;
        let enc = forward::encode(&mut g, &self.params, &b, &self.config, &batch)?;
        Ok(Encoding {
            touches: rows(g.value(enc.h)),
            attention: g.value(enc.alpha).data().to_vec(),
            context: g.value(enc.ctx).row_slice(0).to_vec(),
        })
    }

    /// `P(Y=1)` for each treatment sequence under covariates `x`. Sequences may
    /// be empty.
    pub fn score_variants(&self, x: &[f64], variants: &[Vec<usize>]) -> Result<Vec<f64>, NnError> {
        if x.len() != self.d_x {
            return Err(NnError::Contract(format!("expected {} covariates, got {}", self.d_x, x.len())));
        }
        let marginal = self.config.frontdoor_inference && !self.references.is_empty();
        let r = if marginal { self.references.len() } else { 0 };
        let all: Vec<Vec<usize>> = if marginal {
            self.references.iter().chain(variants).cloned().collect()
        } else {
            variants.to_vec()
        };
        let batch = Batch::variants(x, &all, self.n_clusters)?;
        let mut g = Graph::new();
        let p = &self.params;
        let b = forward::Bound::new(&mut g, p)?;
        let enc = forward::encode(&mut g, p, &b, &self.config, &batch)?;
        let med = forward::mediator(&mut g, p, &b, &self.config, &enc, &batch)?;
        if !marginal {
            let logit = forward::ite_logit(&mut g, p, &b, &enc, &med)?;
            return Ok(g.value(logit).data().iter().map(|&z| crate::math::sigmoid(z)).collect());
        }
        let ctx = g.matmul(enc.ctx, b.v(p.ids.wc))?;
        let ctx = g.value(ctx).data()[..r].to_vec();
        let xi = g.matmul(enc.xp, b.v(p.ids.wxi))?;
        let base = g.value(xi).data()[0] + p.get(p.ids.b).item();
        let u = p.get(p.ids.u).item();
        let mu = g.value(med.mu).data();
        Ok((0..variants.len())
            .map(|v| {
                let m = base + u * mu[r + v];
                ctx.iter().map(|c| crate::math::sigmoid(m + c)).sum::<f64>() / r as f64
            })
            .collect())
    }

    pub fn predict_upload(&self, ep: &Episode) -> Result<f64, NnError> {
        if ep.touches.is_empty() {
            return Err(NnError::Contract(format!("episode {} has no touches", ep.user_id)));
        }
        Ok(self.score_variants(&ep.x, &[ep.clusters()])?[0])
    }

    /// Own-context outcome probability for many episodes in one pass; this is
    /// the training-time head output.
    pub fn predict_observational(&self, eps: &[Episode]) -> Result<Vec<f64>, NnError> {
        let refs: Vec<&Episode> = eps.iter().collect();
        let batch = self.batch(&refs)?;
        let mut g = Graph::new();
        let p = &self.params;
        let b = forward::Bound::new(&mut g, p)?;
        let enc = forward::encode(&mut g, p, &b, &self.config, &batch)?;
        let med = forward::mediator(&mut g, p, &b, &self.config, &enc, &batch)?;
        let logit = forward::ite_logit(&mut g, p, &b, &enc, &med)?;
        Ok(g.value(logit).data().iter().map(|&z| crate::math::sigmoid(z)).collect())
    }

    pub fn mediator_branch(&self, ep: &Episode) -> Result<MediatorOutput, NnError> {
        let mut out = self.mediator_rows(std::slice::from_ref(ep))?;
        Ok(out.remove(0))
    }

    /// Mediator outputs for many episodes in one pass.
    pub fn mediator_rows(&self, eps: &[Episode]) -> Result<Vec<MediatorOutput>, NnError> {
        let refs: Vec<&Episode> = eps.iter().collect();
        let batch = self.batch(&refs)?;
        let mut g = Graph::new();
        let p = &self.params;
        let b = forward::Bound::new(&mut g, p)?;
        let enc = forward::encode(&mut g, p, &b, &self.config, &batch)?;
        let med = forward::mediator(&mut g, p, &b, &self.config, &enc, &batch)?;
        let mhat = g.value(med.mhat);
        let yp = g.value(med.yprime).data();
        let mut out: Vec<MediatorOutput> = eps
            .iter()
            .map(|e| MediatorOutput {
                mhat: Vec::with_capacity(e.touches.len()),
                proxy: Vec::with_capacity(e.touches.len()),
            })
            .collect();
        for (j, &s) in batch.seg.iter().enumerate() {
            out[s].mhat.push(mhat.row_slice(j).to_vec());
            out[s].proxy.push(yp[j]);
        }
        Ok(out)
    }

    /// Discriminator probability of `Y` for one mediator row.
    pub fn adversary(&self, mhat: &[f64], lambda_grl: f64) -> Result<f64, NnError> {
        if mhat.len() != self.config.mediator_dim {
            return Err(NnError::Contract(format!(
                "mediator row has {} entries, expected {}",
                mhat.len(),
                self.config.mediator_dim
            )));
        }
        let mut g = Graph::new();
        let b = forward::Bound::new(&mut g, &self.params)?;
        let m = g.leaf(Tensor::row(mhat.to_vec()))?;
        let out = forward::adversary(&mut g, &self.params, &b, m, lambda_grl)?;
        forward::check_reversal(&g, out, m)?;
        Ok(g.scalar(out))
    }

    /// Match score `omega(touch, signature)` for a proxy-signature bin.
    pub fn contrastive_score(&self, touch: &TouchEvent, proxy_bin: usize) -> Result<f64, NnError> {
        batch::check_cluster(touch.cluster_id, self.n_clusters)?;
        if proxy_bin >= self.config.proxy_bins {
            return Err(NnError::Vocabulary {
                cluster: proxy_bin,
                n_clusters: self.config.proxy_bins,
            });
        }
        Ok(self.contrastive_scores(&[touch.cluster_id], &[proxy_bin])[0])
    }

    /// Match scores for parallel lists of clusters and proxy bins (ids already checked).
    pub fn contrastive_scores(&self, clusters: &[usize], bins: &[usize]) -> Vec<f64> {
        let p = &self.params;
        let (uc, emb, pc, vb) = (p.get(p.ids.uc), p.get(p.ids.emb), p.get(p.ids.pc), p.get(p.ids.vb));
        clusters
            .iter()
            .zip(bins)
            .map(|(&c, &bin)| {
                let e = emb.row_slice(c);
                let v = vb.row_slice(bin);
                (0..uc.cols())
                    .map(|k| {
                        let shared: f64 = e.iter().enumerate().map(|(i, ei)| ei * pc.get(i, k)).sum();
                        (uc.get(c, k) + shared) * v[k]
                    })
                    .sum::<f64>()
                    / self.config.tau_ctr
            })
            .collect()
    }

    pub fn infonce_loss(&self, eps: &[Episode]) -> Result<f64, NnError> {
        let refs: Vec<&Episode> = eps.iter().collect();
        let batch = self.batch(&refs)?;
        let mut g = Graph::new();
        let b = forward::Bound::new(&mut g, &self.params)?;
        let l = forward::infonce(&mut g, &self.params, &b, &self.config, &batch)?;
        Ok(g.scalar(l))
    }

    /// Full distribution `P(T' = c | X = x)`.
    pub fn propensity(&self, x: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let (w, b) = (p.get(p.ids.wprop), p.get(p.ids.bprop));
        let logits: Vec<f64> = (0..self.n_clusters)
            .map(|c| b.get(0, c) + x.iter().enumerate().map(|(k, xk)| w.get(k, c) * xk).sum::<f64>())
            .collect();
        softmax(&logits)
    }

    pub fn propensity_of(&self, x: &[f64], cluster: usize) -> Result<f64, NnError> {
        batch::check_cluster(cluster, self.n_clusters)?;
        Ok(self.propensity(x)[cluster])
    }

    /// Episode weight: geometric mean of the clamped inverse propensities of its touches.
    pub fn episode_weight(&self, ep: &Episode, ipw: &IpwConfig) -> f64 {
        let probs = self.propensity(&ep.x);
        let n = ep.touches.len() as f64;
        (ep.touches.iter().map(|t| ipw_weight(ipw, probs[t.cluster_id]).ln()).sum::<f64>() / n).exp()
    }
}

#[cfg(test)]
mod tests;
