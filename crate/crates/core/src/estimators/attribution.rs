use serde::{Deserialize, Serialize};

use super::EstimatorError;
use crate::nn::{ModelState, NnError};
use crate::scm::Episode;

fn nn_err(e: NnError) -> EstimatorError {
    EstimatorError::Contract(e.to_string())
}

/// `g(X, T) - g(X, T \ {j})`, with the shortened sequence re-encoded.
pub fn deletion_uplift(state: &ModelState, ep: &Episode, j: usize) -> Result<f64, EstimatorError> {
    let n = ep.touches.len();
    if j >= n {
        return Err(EstimatorError::Contract(format!("touch index {j} out of range for {n} touches")));
    }
    let full = ep.clusters();
    let mut rest = full.clone();
    rest.remove(j);
    let p = state.score_variants(&ep.x, &[full, rest]).map_err(nn_err)?;
    Ok(p[0] - p[1])
}

/// Drop in predicted upload when every touch of `cluster` is removed.
pub fn cluster_uplift(state: &ModelState, ep: &Episode, cluster: usize) -> Result<f64, EstimatorError> {
    let full = ep.clusters();
    let rest: Vec<usize> = full.iter().copied().filter(|&c| c != cluster).collect();
    let p = state.score_variants(&ep.x, &[full, rest]).map_err(nn_err)?;
    Ok(p[0] - p[1])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionConfig {
    pub top_k: usize,
    /// Predicted-upload threshold above which an episode counts as covered.
    pub coverage_threshold: f64,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        Self {
            top_k: 5,
            coverage_threshold: 0.54,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TouchAttribution {
    pub touch_id: String,
    pub cluster_id: usize,
    pub omega: f64,
    pub in_mask: bool,
    /// `None` for touches outside the top-K mask.
    pub delta_hat: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeAttribution {
    pub user_id: String,
    pub p_full: f64,
    pub touches: Vec<TouchAttribution>,
}

impl EpisodeAttribution {
    pub fn depth(&self) -> usize {
        self.touches.iter().filter(|t| t.in_mask).count()
    }
}

/// Indices of the `k` highest scores; ties go to the earlier timestamp, then
/// the earlier position.
pub fn top_k_mask(omega: &[f64], timestamps: &[u64], k: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..omega.len()).collect();
    order.sort_by(|&a, &b| {
        omega[b]
            .total_cmp(&omega[a])
            .then(timestamps[a].cmp(&timestamps[b]))
            .then(a.cmp(&b))
    });
    let mut mask = vec![false; omega.len()];
    for &i in order.iter().take(k) {
        mask[i] = true;
    }
    mask
}

pub fn attribute(state: &ModelState, ep: &Episode, cfg: &AttributionConfig) -> Result<EpisodeAttribution, EstimatorError> {
    if ep.touches.is_empty() {
        return Err(EstimatorError::Contract(format!("episode {} has no touches", ep.user_id)));
    }
    if cfg.top_k == 0 {
        return Err(EstimatorError::Config("top_k must be >= 1".into()));
    }
    let clusters = ep.clusters();
    let bins: Vec<usize> = ep.touches.iter().map(|t| state.config.proxy_bin(t.proxy_score)).collect();
    for &c in &clusters {
        if c >= state.n_clusters {
            return Err(nn_err(NnError::Vocabulary {
                cluster: c,
                n_clusters: state.n_clusters,
            }));
        }
    }
    let omega = state.contrastive_scores(&clusters, &bins);
    let stamps: Vec<u64> = ep.touches.iter().map(|t| t.timestamp).collect();
    let mask = top_k_mask(&omega, &stamps, cfg.top_k);

    let mut variants = vec![clusters.clone()];
    for (j, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        let mut rest = clusters.clone();
        rest.remove(j);
        variants.push(rest);
    }
    let p = state.score_variants(&ep.x, &variants).map_err(nn_err)?;
    let mut next = 1;
    let touches = ep
        .touches
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let delta_hat = mask[j].then(|| {
                next += 1;
                p[0] - p[next - 1]
            });
            TouchAttribution {
                touch_id: t.touch_id.clone(),
                cluster_id: t.cluster_id,
                omega: omega[j],
                in_mask: mask[j],
                delta_hat,
            }
        })
        .collect();
    Ok(EpisodeAttribution {
        user_id: ep.user_id.clone(),
        p_full: p[0],
        touches,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionSummary {
    pub n_episodes: usize,
    pub threshold: f64,
    pub covered: usize,
    pub coverage: f64,
    /// Mean attributed touches per covered episode; `None` when nothing is covered.
    pub mean_depth: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttributionReport {
    pub config_hash: String,
    pub config: AttributionConfig,
    pub episodes: Vec<EpisodeAttribution>,
}

impl AttributionReport {
    pub fn build(
        state: &ModelState,
        episodes: &[Episode],
        cfg: &AttributionConfig,
        config_hash: &str,
    ) -> Result<Self, EstimatorError> {
        let episodes = episodes
            .iter()
            .map(|ep| attribute(state, ep, cfg))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            config_hash: config_hash.to_string(),
            config: *cfg,
            episodes,
        })
    }

    pub fn summary(&self) -> AttributionSummary {
        let covered: Vec<&EpisodeAttribution> = self
            .episodes
            .iter()
            .filter(|e| e.p_full >= self.config.coverage_threshold)
            .collect();
        let n = self.episodes.len();
        AttributionSummary {
            n_episodes: n,
            threshold: self.config.coverage_threshold,
            covered: covered.len(),
            coverage: if n == 0 { 0.0 } else { covered.len() as f64 / n as f64 },
            mean_depth: (!covered.is_empty())
                .then(|| covered.iter().map(|e| e.depth() as f64).sum::<f64>() / covered.len() as f64),
        }
    }

    /// One JSON object per episode, each tagged with the config hash.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            config_hash: &'a str,
            #[serde(flatten)]
            episode: &'a EpisodeAttribution,
        }
        let mut out = String::new();
        for e in &self.episodes {
            let line = Line {
                config_hash: &self.config_hash,
                episode: e,
            };
            out.push_str(&serde_json::to_string(&line).expect("attribution serializes"));
            out.push('\n');
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let s = self.summary();
        let depth = s.mean_depth.map_or_else(String::new, |d| format!("{d}"));
        format!(
            "# config_hash={}\nn_episodes,top_k,threshold,covered,coverage,mean_depth\n{},{},{},{},{},{}\n",
            self.config_hash, s.n_episodes, self.config.top_k, s.threshold, s.covered, s.coverage, depth
        )
    }
}
