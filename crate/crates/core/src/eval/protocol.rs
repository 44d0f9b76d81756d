//! End-to-end grouped AUUC protocol over `(user, cluster)` exposure pairs.

use std::collections::HashMap;

use super::auuc::{grouped_auuc_from_pairs, BucketedAuucReport, ProtocolParams};
use super::kmeans::cluster_treatments;
use super::shapley::{exact_shapley, sampled_shapley};
use super::EvalError;
use crate::digest::sub_seed;
use crate::glm::{FitOptions, Logistic};
use crate::scm::Episode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pair {
    pub user: usize,
    pub cluster: usize,
}

/// Every cluster a user was exposed to, ordered by user then cluster.
pub fn exposed_pairs(episodes: &[Episode]) -> Vec<Pair> {
    let mut out = Vec::new();
    for (u, ep) in episodes.iter().enumerate() {
        let mut cs = ep.clusters();
        cs.sort_unstable();
        cs.dedup();
        out.extend(cs.into_iter().map(|cluster| Pair { user: u, cluster }));
    }
    out
}

/// Episode restricted to the touches whose cluster is in `keep`, order preserved.
pub fn restrict(ep: &Episode, keep: &[usize]) -> Episode {
    let mut out = ep.clone();
    out.touches.retain(|t| keep.contains(&t.cluster_id));
    out
}

/// Reassigns cluster ids by k-means over per-touch embeddings.
pub fn recluster(episodes: &[Episode], touch_embeddings: &[Vec<Vec<f64>>], k: usize, seed: u64) -> Result<Vec<Episode>, EvalError> {
    let flat: Vec<Vec<f64>> = touch_embeddings.iter().flatten().cloned().collect();
    let assign = cluster_treatments(&flat, k, seed)?;
    let mut it = assign.into_iter();
    let mut out = episodes.to_vec();
    for ep in &mut out {
        for t in &mut ep.touches {
            t.cluster_id = it.next().ok_or_else(|| EvalError::Contract("embedding count mismatch".into()))?;
        }
    }
    Ok(out)
}

/// Per-cluster L2 logistic exposure models `P(c in T | X)`, fitted apart from any
/// attribution model.
pub fn exposure_propensities(episodes: &[Episode], pairs: &[Pair], n_clusters: usize, l2: f64) -> Result<Vec<f64>, EvalError> {
    let x: Vec<Vec<f64>> = episodes.iter().map(|e| e.x.clone()).collect();
    let mut models = Vec::with_capacity(n_clusters);
    for c in 0..n_clusters {
        let y: Vec<u8> = episodes.iter().map(|e| u8::from(e.touches.iter().any(|t| t.cluster_id == c))).collect();
        let m = Logistic::fit(&x, &y, None, FitOptions { l2, ..Default::default() })
            .map_err(|e| EvalError::Stage {
                stage: "propensity",
                message: e.to_string(),
            })?;
        models.push(m);
    }
    Ok(pairs.iter().map(|p| models[p.cluster].predict(&episodes[p.user].x)).collect())
}

/// Shapley labels per pair; players are each user's exposed clusters and the
/// game is `v(S) = value(episode restricted to S)`. Users with at most
/// `exact_up_to` clusters are enumerated exactly, the rest use `l` permutations.
pub fn shapley_labels(
    episodes: &[Episode],
    pairs: &[Pair],
    l: usize,
    exact_up_to: usize,
    seed: u64,
    value: &dyn Fn(&Episode) -> f64,
) -> Result<Vec<f64>, EvalError> {
    let mut per_user: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
    let mut users: Vec<usize> = pairs.iter().map(|p| p.user).collect();
    users.dedup();
    for u in users {
        let ep = &episodes[u];
        let mut players = ep.clusters();
        players.sort_unstable();
        players.dedup();
        let mut memo: HashMap<u64, f64> = HashMap::new();
        let game = |mask: u64| -> f64 {
            *memo.entry(mask).or_insert_with(|| {
                let keep: Vec<usize> = players.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, c)| *c).collect();
                value(&restrict(ep, &keep))
            })
        };
        let est = if players.len() <= exact_up_to {
            exact_shapley(players.len(), game)?
        } else {
            sampled_shapley(players.len(), l, sub_seed(seed, &format!("shapley/{u}")), game)?
        };
        per_user.insert(u, players.iter().copied().zip(est.phi).collect());
    }
    Ok(pairs
        .iter()
        .map(|p| {
            per_user[&p.user]
                .iter()
                .find(|(c, _)| *c == p.cluster)
                .map(|(_, v)| *v)
                .expect("pair cluster is a player")
        })
        .collect())
}

/// Pairs, propensities and labels for one protocol seed; reusable across models.
#[derive(Clone, Debug)]
pub struct PreparedProtocol {
    pub params: ProtocolParams,
    pub pairs: Vec<Pair>,
    pub e_hat: Vec<f64>,
    pub labels: Vec<f64>,
}

impl PreparedProtocol {
    pub fn prepare(
        episodes: &[Episode],
        n_clusters: usize,
        params: ProtocolParams,
        value: &dyn Fn(&Episode) -> f64,
    ) -> Result<Self, EvalError> {
        let pairs = exposed_pairs(episodes);
        let e_hat = exposure_propensities(episodes, &pairs, n_clusters, 1e-2)?;
        let labels = shapley_labels(episodes, &pairs, params.l, 0, params.seed, value).map_err(|e| e.at("shapley"))?;
        Ok(Self { params, pairs, e_hat, labels })
    }

    pub fn report(&self, scores: &[f64]) -> Result<BucketedAuucReport, EvalError> {
        grouped_auuc_from_pairs(&self.e_hat, scores, &self.labels, &self.params)
    }
}
