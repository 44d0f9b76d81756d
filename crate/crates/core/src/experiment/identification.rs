//! Estimator-level checks that use the sealed latents of a generated dataset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::digest::sub_seed;
use crate::estimators::{frontdoor_do, frontdoor_do_restricted, ipw_weight, naive_conditional, FdSample, FrontdoorTables, IpwConfig};
use crate::eval::{discretize_episodes, variance_reduction_check, VarianceReport};
use crate::glm::{FitOptions, MultinomialLogit};
use crate::math::{mean, variance};
use crate::scm::{generate, Generated, Oracle, ScmConfig};

/// Discretization of single-touch data for the front-door tables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub mediator_bins: usize,
    pub x_bins: usize,
}

impl Default for Discretization {
    fn default() -> Self {
        Self {
            mediator_bins: 21,
            x_bins: 2,
        }
    }
}

fn quantile_cuts(values: &[f64], bins: usize) -> Vec<f64> {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    (1..bins).map(|k| s[k * s.len() / bins]).collect()
}

/// Front-door samples from the first touch of each episode, with IPW weights
/// from a multinomial-logit propensity on `X`.
pub fn frontdoor_samples(
    data: &Generated,
    n_clusters: usize,
    disc: Discretization,
    ipw: &IpwConfig,
) -> Result<Vec<FdSample>, ExperimentError> {
    let eps = &data.episodes;
    if eps.iter().any(|e| e.touches.len() != 1) {
        return Err(ExperimentError::Data("front-door tables need single-touch episodes".into()));
    }
    let x: Vec<Vec<f64>> = eps.iter().map(|e| e.x.clone()).collect();
    let t: Vec<usize> = eps.iter().map(|e| e.touches[0].cluster_id).collect();
    let prop = MultinomialLogit::fit(&x, &t, n_clusters, None, FitOptions::default())
        .map_err(|e| ExperimentError::Eval(format!("propensity fit: {e}")))?;
    let m = eps
        .iter()
        .map(|e| data.latents.get(&e.latent_handle).map(|l| l.m))
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| ExperimentError::Data("episode without a sealed latent".into()))?;
    let m_cuts = quantile_cuts(&m, disc.mediator_bins);
    let x0: Vec<f64> = x.iter().map(|v| v[0]).collect();
    let x_cuts = quantile_cuts(&x0, disc.x_bins);
    Ok((0..eps.len())
        .map(|i| FdSample {
            m: m_cuts.partition_point(|c| *c <= m[i]),
            t: t[i],
            x: x_cuts.partition_point(|c| *c <= x0[i]),
            y: f64::from(eps[i].y),
            w_mt: ipw_weight(ipw, prop.predict_proba(&x[i])[t[i]]),
        })
        .collect())
}

/// Population interventional value of each single-cluster treatment, averaged
/// over the covariates of the first `draws` episodes.
pub fn oracle_truth(cfg: &ScmConfig, data: &Generated, draws: usize) -> Result<Vec<f64>, ExperimentError> {
    let oracle = Oracle::new(cfg)?;
    let xs = &data.episodes[..draws.min(data.episodes.len())];
    (0..cfg.n_clusters)
        .map(|c| {
            let mut s = 0.0;
            for e in xs {
                s += oracle.p_do(&e.x, &[c])?;
            }
            Ok(s / xs.len() as f64)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecovery {
    pub cluster: usize,
    pub truth: f64,
    pub frontdoor: f64,
    pub naive: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeconfoundingReport {
    pub n: usize,
    pub clusters: Vec<ClusterRecovery>,
    pub max_frontdoor_error: f64,
    pub max_naive_error: f64,
}

/// Front-door plus IPW estimates against the oracle on a single-touch dataset.
pub fn deconfounding(cfg: &ScmConfig, n: usize, truth_draws: usize) -> Result<DeconfoundingReport, ExperimentError> {
    let data = generate(cfg, n)?;
    let disc = Discretization::default();
    let samples = frontdoor_samples(&data, cfg.n_clusters, disc, &IpwConfig::default())?;
    let tables = FrontdoorTables::from_samples(&samples, disc.mediator_bins, cfg.n_clusters, disc.x_bins)?;
    let truth = oracle_truth(cfg, &data, truth_draws)?;
    let mut clusters = Vec::with_capacity(cfg.n_clusters);
    for (c, &truth) in truth.iter().enumerate() {
        clusters.push(ClusterRecovery {
            cluster: c,
            truth,
            frontdoor: frontdoor_do(&tables, c)?,
            naive: naive_conditional(&samples, c)
                .ok_or_else(|| ExperimentError::Data(format!("cluster {c} never observed")))?,
        });
    }
    let max_err = |f: fn(&ClusterRecovery) -> f64| clusters.iter().map(|r| (f(r) - r.truth).abs()).fold(0.0, f64::max);
    Ok(DeconfoundingReport {
        n,
        max_frontdoor_error: max_err(|r| r.frontdoor),
        max_naive_error: max_err(|r| r.naive),
        clusters,
    })
}

/// Conditional-variance comparison with and without the proxy.
pub fn variance_check(cfg: &ScmConfig, n: usize, tolerance: f64) -> Result<VarianceReport, ExperimentError> {
    let data = generate(cfg, n)?;
    let (cells, bins, y) = discretize_episodes(&data.episodes, 4, 5);
    Ok(variance_reduction_check(&cells, &bins, &y, 20, tolerance)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub retained: Vec<bool>,
    pub resamples: usize,
    /// Bootstrap variance of each target's estimate, all treatments kept.
    pub var_unfiltered: Vec<f64>,
    /// Same with the marginalization restricted to the retained treatments.
    pub var_filtered: Vec<f64>,
    pub total_unfiltered: f64,
    pub total_filtered: f64,
    pub resamples_skipped: usize,
}

/// Bootstrap variance of the front-door estimate with and without restricting
/// the `t'` marginalization to `retained`. Resamples in which either estimate
/// hits an empty cell are skipped and counted.
pub fn overlap_bootstrap(
    samples: &[FdSample],
    disc: Discretization,
    n_clusters: usize,
    retained: &[bool],
    resamples: usize,
    seed: u64,
) -> Result<OverlapReport, ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "bootstrap"));
    let mut full: Vec<Vec<f64>> = vec![Vec::new(); n_clusters];
    let mut filt: Vec<Vec<f64>> = vec![Vec::new(); n_clusters];
    let mut skipped = 0;
    let mut draw = Vec::with_capacity(samples.len());
    for _ in 0..resamples {
        draw.clear();
        draw.extend((0..samples.len()).map(|_| samples[rng.random_range(0..samples.len())]));
        let tables = FrontdoorTables::from_samples(&draw, disc.mediator_bins, n_clusters, disc.x_bins)?;
        let row: Option<(Vec<f64>, Vec<f64>)> = (0..n_clusters)
            .map(|t| {
                let a = frontdoor_do(&tables, t).ok()?;
                let b = frontdoor_do_restricted(&tables, t, Some(retained)).ok()?;
                Some((a, b))
            })
            .collect();
        match row {
            Some((a, b)) => {
                for t in 0..n_clusters {
                    full[t].push(a[t]);
                    filt[t].push(b[t]);
                }
            }
            None => skipped += 1,
        }
    }
    if full[0].len() < 2 {
        return Err(ExperimentError::Eval("fewer than two usable bootstrap resamples".into()));
    }
    let var_unfiltered: Vec<f64> = full.iter().map(|v| variance(v)).collect();
    let var_filtered: Vec<f64> = filt.iter().map(|v| variance(v)).collect();
    Ok(OverlapReport {
        retained: retained.to_vec(),
        resamples,
        total_unfiltered: var_unfiltered.iter().sum(),
        total_filtered: var_filtered.iter().sum(),
        var_unfiltered,
        var_filtered,
        resamples_skipped: skipped,
    })
}

/// Mean of `values` grouped by `groups`, `None` for unseen groups.
pub(crate) fn group_means(values: &[f64], groups: &[usize], n: usize) -> Vec<Option<f64>> {
    let mut acc = vec![Vec::new(); n];
    for (v, &g) in values.iter().zip(groups) {
        acc[g].push(*v);
    }
    acc.iter().map(|a| (!a.is_empty()).then(|| mean(a))).collect()
}
