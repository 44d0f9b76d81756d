use serde::{Deserialize, Serialize};

use super::bench::{evaluate_models, train_network, ALM_NAME};
use super::identification::{frontdoor_samples, group_means, overlap_bootstrap, Discretization, OverlapReport};
use super::{split, ExperimentConfig, ExperimentError};
use crate::baselines::NetworkModel;
use crate::estimators::IpwConfig;
use crate::eval::{auc, stability_report, StabilityReport};
use crate::glm::{FitOptions, Logistic};
use crate::math::softmax;
use crate::nn::{ModelConfig, ModelState};
use crate::scm::{generate, sensitivity_grid, Episode, Generated};
use crate::training::{multi_seed_run, SeedRun};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageArm {
    pub lambda_adv: f64,
    /// Held-out AUC of a fresh logistic probe predicting `Y` from pooled mediator rows.
    pub discriminator_auc: f64,
    /// Touch-level AUC of the proxy head against the binarized proxy score.
    pub proxy_auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub full: LeakageArm,
    pub ablation: LeakageArm,
}

/// Mean mediator row of each episode.
fn pooled_mediator(state: &ModelState, eps: &[Episode]) -> Result<Vec<Vec<f64>>, ExperimentError> {
    let mut out = Vec::with_capacity(eps.len());
    for chunk in eps.chunks(512) {
        for m in state.mediator_rows(chunk)? {
            let n = m.mhat.len() as f64;
            let mut v = vec![0.0; state.config.mediator_dim];
            for row in &m.mhat {
                v.iter_mut().zip(row).for_each(|(a, b)| *a += b / n);
            }
            out.push(v);
        }
    }
    Ok(out)
}

fn leakage_arm(state: &ModelState, holdout: &[Episode]) -> Result<LeakageArm, ExperimentError> {
    let feats = pooled_mediator(state, holdout)?;
    let y: Vec<u8> = holdout.iter().map(|e| e.y).collect();
    let half = holdout.len() / 2;
    let probe = Logistic::fit(&feats[..half], &y[..half], None, FitOptions::default())
        .map_err(|e| ExperimentError::Eval(format!("leakage probe: {e}")))?;
    let p: Vec<f64> = feats[half..].iter().map(|f| probe.predict(f)).collect();
    let discriminator_auc = auc(&p, &y[half..])?;

    let mut proxy = Vec::new();
    let mut labels = Vec::new();
    for chunk in holdout.chunks(512) {
        for (m, e) in state.mediator_rows(chunk)?.into_iter().zip(chunk) {
            proxy.extend(m.proxy);
            labels.extend(e.touches.iter().map(|t| u8::from(t.proxy_score >= state.config.proxy_threshold)));
        }
    }
    Ok(LeakageArm {
        lambda_adv: state.config.lambda_adv,
        discriminator_auc,
        proxy_auc: auc(&proxy, &labels)?,
    })
}

/// Full training against the same training with the adversary switched off.
pub fn leakage(cfg: &ExperimentConfig, episodes: &[Episode]) -> Result<LeakageReport, ExperimentError> {
    let (train, holdout) = split(episodes, cfg.n_train(episodes.len()));
    let (k, d) = (cfg.scm.n_clusters, cfg.scm.d_x);
    let (full, _) = train_network(train, k, d, &cfg.model, &cfg.plan)?;
    let off = ModelConfig {
        lambda_adv: 0.0,
        ..cfg.model.clone()
    };
    let (ablation, _) = train_network(train, k, d, &off, &cfg.plan)?;
    Ok(LeakageReport {
        full: leakage_arm(&full, holdout)?,
        ablation: leakage_arm(&ablation, holdout)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReportPair {
    pub seeds: Vec<u64>,
    /// Attribution distributions with the configured regularization.
    pub full: StabilityReport,
    /// Attribution distributions with `lambda_reg = 0`.
    pub ablation: StabilityReport,
    /// Predicted-score distributions, same two arms.
    pub full_scores: StabilityReport,
    pub ablation_scores: StabilityReport,
}

/// Attribution distributions across the plan seeds, with and without the
/// regularization term.
pub fn stability(cfg: &ExperimentConfig, episodes: &[Episode], holdout_cap: usize) -> Result<StabilityReportPair, ExperimentError> {
    let (train, holdout) = split(episodes, cfg.n_train(episodes.len()));
    let holdout = &holdout[..holdout_cap.min(holdout.len())];
    let (k, d) = (cfg.scm.n_clusters, cfg.scm.d_x);
    let runs = multi_seed_run(train, holdout, k, d, &cfg.model, &cfg.plan)?;
    let off = ModelConfig {
        lambda_reg: 0.0,
        ..cfg.model.clone()
    };
    let ablated = multi_seed_run(train, holdout, k, d, &off, &cfg.plan)?;
    let attr = |rs: &[SeedRun]| rs.iter().map(|r| r.attributions.clone()).collect::<Vec<_>>();
    let scores = |rs: &[SeedRun]| rs.iter().map(|r| r.scores.clone()).collect::<Vec<_>>();
    Ok(StabilityReportPair {
        seeds: cfg.plan.seeds.clone(),
        full: stability_report(&attr(&runs))?,
        ablation: stability_report(&attr(&ablated))?,
        full_scores: stability_report(&scores(&runs))?,
        ablation_scores: stability_report(&scores(&ablated))?,
    })
}

/// Mean match of each cluster's touches to their own proxy signature: the
/// softmax over all signature bins of the contrastive scores, read at the
/// touch's bin. `None` for clusters never seen.
pub fn cluster_match_scores(state: &ModelState, eps: &[Episode]) -> Vec<Option<f64>> {
    let n_bins = state.config.proxy_bins;
    let bins: Vec<usize> = (0..n_bins).collect();
    let table: Vec<Vec<f64>> = (0..state.n_clusters)
        .map(|c| softmax(&state.contrastive_scores(&vec![c; n_bins], &bins)))
        .collect();
    let mut values = Vec::new();
    let mut clusters = Vec::new();
    for t in eps.iter().flat_map(|e| &e.touches) {
        if t.cluster_id < state.n_clusters {
            values.push(table[t.cluster_id][state.config.proxy_bin(t.proxy_score)]);
            clusters.push(t.cluster_id);
        }
    }
    group_means(&values, &clusters, state.n_clusters)
}

/// Retention mask of the `k` highest-scoring clusters; ties go to the lower id
/// and unseen clusters are never retained.
pub fn top_clusters(scores: &[Option<f64>], k: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..scores.len()).filter(|&c| scores[c].is_some()).collect();
    order.sort_by(|&a, &b| scores[b].unwrap().total_cmp(&scores[a].unwrap()).then(a.cmp(&b)));
    let mut keep = vec![false; scores.len()];
    for &c in order.iter().take(k) {
        keep[c] = true;
    }
    keep
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapRun {
    pub match_scores: Vec<Option<f64>>,
    pub report: OverlapReport,
}

/// Trains on a single-touch dataset, keeps the `top_k` clusters by match score
/// and bootstraps the filtered and unfiltered front-door estimates.
pub fn overlap(cfg: &ExperimentConfig, data: &Generated, resamples: usize) -> Result<OverlapRun, ExperimentError> {
    let (k, d) = (cfg.scm.n_clusters, cfg.scm.d_x);
    let (train, _) = split(&data.episodes, cfg.n_train(data.episodes.len()));
    let (state, _) = train_network(train, k, d, &cfg.model, &cfg.plan)?;
    let match_scores = cluster_match_scores(&state, &data.episodes);
    let retained = top_clusters(&match_scores, cfg.model.top_k);
    let disc = Discretization::default();
    let samples = frontdoor_samples(data, k, disc, &IpwConfig::default())?;
    let report = overlap_bootstrap(&samples, disc, k, &retained, resamples, cfg.scm.seed)?;
    Ok(OverlapRun { match_scores, report })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub relevance: f64,
    pub leakage: f64,
    pub auc: f64,
    pub logloss: f64,
    pub avg_auuc: f64,
    pub mean_tau: f64,
}

/// Retrains and scores the full method on every proxy-knob combination.
pub fn sensitivity(cfg: &ExperimentConfig) -> Result<Vec<SensitivityRow>, ExperimentError> {
    let grid = sensitivity_grid(&cfg.scm, &cfg.eval.relevance_levels, &cfg.eval.leakage_levels)?;
    let mut rows = Vec::with_capacity(grid.len());
    for scm in grid {
        let run = ExperimentConfig {
            scm: scm.clone(),
            ..cfg.clone()
        };
        let data = generate(&scm, run.n_episodes)?;
        let (train, holdout) = split(&data.episodes, run.n_train(data.episodes.len()));
        let (state, _) = train_network(train, scm.n_clusters, scm.d_x, &run.model, &run.plan)?;
        let model = NetworkModel {
            label: ALM_NAME.into(),
            state,
        };
        let report = evaluate_models(&run, &[&model], holdout)?;
        let r = &report.rows[0];
        rows.push(SensitivityRow {
            relevance: scm.proxy_relevance,
            leakage: scm.proxy_leakage,
            auc: r.auc,
            logloss: r.logloss,
            avg_auuc: r.avg_auuc,
            mean_tau: report.tau[0].mean_tau,
        });
    }
    Ok(rows)
}
