use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{covariate_cohorts, split, ExperimentConfig, ExperimentError};
use crate::baselines::{LastTouch, LogisticBaseline, NetworkModel, OracleModel, TwoStageResidual, UpliftModel};
use crate::digest::sub_seed;
use crate::eval::{auc, gauc, kendall_tau, logloss, BucketedAuucReport, PreparedProtocol, ProtocolParams};
use crate::nn::{ModelConfig, ModelState};
use crate::scm::{Episode, Oracle};
use crate::training::{staged_train, TrainLog, TrainPlan};

pub const ALM_NAME: &str = "ALM-MTA";
pub const NAIVE_NAME: &str = "naive-sequence-lite";

pub fn train_network(
    train: &[Episode],
    n_clusters: usize,
    d_x: usize,
    model: &ModelConfig,
    plan: &TrainPlan,
) -> Result<(ModelState, TrainLog), ExperimentError> {
    Ok(staged_train(train, n_clusters, d_x, model, plan)?)
}

/// Every benchmarked model, fitted on the same training split.
pub struct FittedModels {
    pub last_touch: LastTouch,
    pub logistic: LogisticBaseline,
    pub two_stage: TwoStageResidual,
    pub naive: NetworkModel,
    pub alm: NetworkModel,
}

impl FittedModels {
    /// Report order: baselines first, the full method last.
    pub fn all(&self) -> Vec<&dyn UpliftModel> {
        vec![&self.last_touch, &self.logistic, &self.two_stage, &self.naive, &self.alm]
    }
}

pub fn fit_models(cfg: &ExperimentConfig, train: &[Episode]) -> Result<FittedModels, ExperimentError> {
    let (k, d) = (cfg.scm.n_clusters, cfg.scm.d_x);
    let (alm, _) = train_network(train, k, d, &cfg.model, &cfg.plan)?;
    let (naive, _) = train_network(train, k, d, &cfg.model.naive(), &cfg.plan)?;
    Ok(FittedModels {
        last_touch: LastTouch::fit(train, k),
        logistic: LogisticBaseline::fit(train, k)?,
        two_stage: TwoStageResidual::fit(train, k)?,
        naive: NetworkModel {
            label: NAIVE_NAME.into(),
            state: naive,
        },
        alm: NetworkModel {
            label: ALM_NAME.into(),
            state: alm,
        },
    })
}

/// Shapley value function: interventional upload probability of the
/// restricted sequence.
pub fn oracle_value(oracle: &Oracle) -> impl Fn(&Episode) -> f64 + '_ {
    move |ep| oracle.p_do(&ep.x, &ep.clusters()).expect("cluster ids validated")
}

fn check_clusters(eps: &[Episode], n_clusters: usize) -> Result<(), ExperimentError> {
    for e in eps {
        if e.touches.is_empty() {
            return Err(ExperimentError::Data(format!("episode {} has no touches", e.user_id)));
        }
        if let Some(t) = e.touches.iter().find(|t| t.cluster_id >= n_clusters) {
            return Err(ExperimentError::Data(format!(
                "touch {} has cluster {} >= {n_clusters}",
                t.touch_id, t.cluster_id
            )));
        }
    }
    Ok(())
}

/// Cluster-deletion uplift of every protocol pair.
pub fn pair_scores(model: &dyn UpliftModel, eps: &[Episode], protocol: &PreparedProtocol) -> Result<Vec<f64>, ExperimentError> {
    protocol
        .pairs
        .iter()
        .map(|p| Ok(model.cluster_uplift(&eps[p.user], p.cluster)?))
        .collect()
}

fn prepare_protocols(
    cfg: &ExperimentConfig,
    eps: &[Episode],
    oracle: &Oracle,
) -> Result<Vec<PreparedProtocol>, ExperimentError> {
    let value = oracle_value(oracle);
    cfg.eval
        .protocol_seeds
        .iter()
        .map(|&seed| {
            let params = ProtocolParams {
                b: cfg.eval.b,
                k: cfg.scm.n_clusters,
                l: cfg.eval.l,
                seed,
            };
            Ok(PreparedProtocol::prepare(eps, cfg.scm.n_clusters, params, &value)?)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuucSanity {
    pub oracle: Vec<f64>,
    pub random: Vec<f64>,
    /// Whether a strictly monotone transform of the oracle scores left every
    /// seed's gAUUC bit-identical.
    pub monotone_invariant: bool,
}

impl AuucSanity {
    pub fn passes(&self) -> bool {
        self.monotone_invariant && self.oracle.iter().zip(&self.random).all(|(o, r)| o > r)
    }
}

/// Oracle scores against uniform random scores under every protocol seed.
pub fn auuc_sanity(cfg: &ExperimentConfig, eps: &[Episode]) -> Result<AuucSanity, ExperimentError> {
    check_clusters(eps, cfg.scm.n_clusters)?;
    let oracle = Oracle::new(&cfg.scm)?;
    let truth = OracleModel { oracle: &oracle };
    let mut out = AuucSanity {
        oracle: Vec::new(),
        random: Vec::new(),
        monotone_invariant: true,
    };
    for protocol in prepare_protocols(cfg, eps, &oracle)? {
        let scores = pair_scores(&truth, eps, &protocol)?;
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(protocol.params.seed, "random-scores"));
        let random: Vec<f64> = scores.iter().map(|_| rng.random()).collect();
        let g = protocol.report(&scores)?.gauuc;
        let moved: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        out.monotone_invariant &= protocol.report(&moved)?.gauuc == g;
        out.oracle.push(g);
        out.random.push(protocol.report(&random)?.gauuc);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub model: String,
    pub auc: f64,
    pub logloss: f64,
    pub gauc: f64,
    /// Mean gAUUC over the protocol seeds.
    pub avg_auuc: f64,
    pub gauuc_per_seed: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauRow {
    pub model: String,
    pub mean_tau: f64,
    pub episodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config_hash: String,
    pub rows: Vec<BenchRow>,
    pub tau: Vec<TauRow>,
}

impl BenchReport {
    pub fn row(&self, model: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    pub fn tau_of(&self, model: &str) -> Option<f64> {
        self.tau.iter().find(|r| r.model == model).map(|r| r.mean_tau)
    }

    /// The comparison table: one row per model, four metric columns.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# config_hash={}\nmodel,AUC,log-loss,gAUC,avg AUUC\n", self.config_hash);
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                r.model, r.auc, r.logloss, r.gauc, r.avg_auuc
            ));
        }
        s
    }

    pub fn tau_csv(&self) -> String {
        let mut s = format!("# config_hash={}\nmodel,mean_kendall_tau,episodes\n", self.config_hash);
        for r in &self.tau {
            s.push_str(&format!("{},{:.6},{}\n", r.model, r.mean_tau, r.episodes));
        }
        s
    }
}

/// Mean Kendall tau between model and oracle per-touch uplifts over the first
/// `n` episodes whose oracle uplifts are not all tied. An undefined model tau
/// (all model uplifts tied) counts as zero.
pub fn kendall_summary(
    model: &dyn UpliftModel,
    oracle: &Oracle,
    eps: &[Episode],
    n: usize,
) -> Result<TauRow, ExperimentError> {
    let truth = OracleModel { oracle };
    let mut taus = Vec::with_capacity(n);
    for ep in eps {
        if taus.len() == n {
            break;
        }
        let t = truth.touch_uplifts(ep)?;
        if kendall_tau(&t, &t).is_none() {
            continue;
        }
        let m = model.touch_uplifts(ep)?;
        taus.push(kendall_tau(&m, &t).unwrap_or(0.0));
    }
    if taus.is_empty() {
        return Err(ExperimentError::Eval("no episode with distinguishable oracle uplifts".into()));
    }
    Ok(TauRow {
        model: model.name().to_string(),
        mean_tau: taus.iter().sum::<f64>() / taus.len() as f64,
        episodes: taus.len(),
    })
}

/// Scores fitted models on the held-out episodes.
pub fn evaluate_models(
    cfg: &ExperimentConfig,
    models: &[&dyn UpliftModel],
    holdout: &[Episode],
) -> Result<BenchReport, ExperimentError> {
    check_clusters(holdout, cfg.scm.n_clusters)?;
    let oracle = Oracle::new(&cfg.scm)?;
    let labels: Vec<u8> = holdout.iter().map(|e| e.y).collect();
    let cohorts = covariate_cohorts(holdout, cfg.eval.gauc_cohorts);
    let users = &holdout[..cfg.eval.auuc_users.min(holdout.len())];
    let protocols = prepare_protocols(cfg, users, &oracle)?;
    let mut rows = Vec::new();
    let mut tau = Vec::new();
    for m in models {
        let p = m.predict_all(holdout)?;
        let mut per_seed = Vec::with_capacity(protocols.len());
        for protocol in &protocols {
            per_seed.push(protocol.report(&pair_scores(*m, users, protocol)?)?.gauuc);
        }
        rows.push(BenchRow {
            model: m.name().to_string(),
            auc: auc(&p, &labels)?,
            logloss: logloss(&p, &labels)?,
            gauc: gauc(&p, &labels, &cohorts)?.value,
            avg_auuc: per_seed.iter().sum::<f64>() / per_seed.len() as f64,
            gauuc_per_seed: per_seed,
        });
        tau.push(kendall_summary(*m, &oracle, holdout, cfg.eval.tau_episodes)?);
    }
    Ok(BenchReport {
        config_hash: cfg.hash(),
        rows,
        tau,
    })
}

/// Fits every model on the training split and scores the held-out split.
pub fn benchmark(cfg: &ExperimentConfig, episodes: &[Episode]) -> Result<BenchReport, ExperimentError> {
    let (train, holdout) = split(episodes, cfg.n_train(episodes.len()));
    check_clusters(train, cfg.scm.n_clusters)?;
    if holdout.is_empty() {
        return Err(ExperimentError::Data("holdout split is empty".into()));
    }
    let fitted = fit_models(cfg, train)?;
    evaluate_models(cfg, &fitted.all(), holdout)
}

/// Per-seed bucketed AUUC reports of one model on the held-out users.
pub fn bucket_reports(
    cfg: &ExperimentConfig,
    model: &dyn UpliftModel,
    holdout: &[Episode],
) -> Result<Vec<BucketedAuucReport>, ExperimentError> {
    check_clusters(holdout, cfg.scm.n_clusters)?;
    let oracle = Oracle::new(&cfg.scm)?;
    let users = &holdout[..cfg.eval.auuc_users.min(holdout.len())];
    prepare_protocols(cfg, users, &oracle)?
        .iter()
        .map(|p| Ok(p.report(&pair_scores(model, users, p)?)?))
        .collect()
}
