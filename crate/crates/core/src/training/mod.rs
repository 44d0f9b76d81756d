//! Staged, loss-balanced and annealed optimization of the attribution network.

mod log;
mod optim;
mod plan;

pub use log::{balance_check, BalanceReport, LogRow, TrainLog, COMPONENTS};
pub use optim::{Adagrad, Adam, Optimizer, ADAGRAD_INIT};
pub use plan::{AnnealCurve, StageSteps, TrainPlan};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::AutodiffError;
use crate::digest::sub_seed;
use crate::estimators::{attribute, AttributionConfig, IpwConfig};
use crate::eval::auc;
use crate::nn::{forward, Batch, Block, LossWeights, ModelConfig, ModelState, NnError};
use crate::scm::Episode;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training plan: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite loss at stage {stage}, step {step}: {detail}")]
    NonFinite {
        stage: u8,
        step: u64,
        detail: String,
        /// Parameters as they were before the failing step.
        snapshot: Box<ModelState>,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Parameter groups updated in each stage (1-based).
pub fn stage_blocks(stage: u8) -> &'static [Block] {
    match stage {
        1 => &[Block::Backbone, Block::HeadIte, Block::Propensity],
        2 => &[Block::Backbone, Block::HeadIte, Block::Propensity, Block::HeadProxy],
        _ => &Block::ALL,
    }
}

/// Loss multipliers at `progress` through `stage`.
pub fn stage_weights(cfg: &ModelConfig, plan: &TrainPlan, stage: u8, progress: f64) -> LossWeights {
    let ramp = if stage >= 3 { plan.anneal_curve.at(progress) } else { 0.0 };
    LossWeights {
        dml: cfg.lambda_dml,
        proxy: if stage >= 2 { cfg.lambda_proxy } else { 0.0 },
        adv: cfg.lambda_adv * ramp,
        ctr: cfg.lambda_ctr * ramp,
        reg: cfg.lambda_reg,
        prop: 1.0,
        grl: if stage >= 3 {
            cfg.grl_schedule.target() * cfg.grl_schedule.curve(progress)
        } else {
            0.0
        },
    }
}

fn episode_weights(state: &ModelState, eps: &[&Episode], ipw: &IpwConfig, use_ipw: bool) -> (Vec<f64>, usize) {
    if !use_ipw {
        return (vec![1.0; eps.len()], 0);
    }
    let mut clamped = 0;
    let mut w: Vec<f64> = eps
        .iter()
        .map(|ep| {
            let probs = state.propensity(&ep.x);
            clamped += ep.touches.iter().filter(|t| ipw.is_clamped(probs[t.cluster_id])).count();
            state.episode_weight(ep, ipw)
        })
        .collect();
    if ipw.normalize {
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        w.iter_mut().for_each(|v| *v /= mean);
    }
    (w, clamped)
}

struct Sampler {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl Sampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut s = Self {
            order: (0..n).collect(),
            cursor: 0,
            rng: ChaCha8Rng::seed_from_u64(sub_seed(seed, "shuffle")),
        };
        s.order.shuffle(&mut s.rng);
        s
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        let size = size.min(self.order.len());
        if self.cursor + size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let out = self.order[self.cursor..self.cursor + size].to_vec();
        self.cursor += size;
        out
    }
}

struct Optimizers {
    slots: Vec<Optimizer>,
}

impl Optimizers {
    fn new(state: &ModelState) -> Self {
        Self {
            slots: state
                .params
                .list
                .iter()
                .map(|p| {
                    if p.sparse {
                        Optimizer::Adagrad(Adagrad::new(p.value.len()))
                    } else {
                        Optimizer::Adam(Adam::new(p.value.len()))
                    }
                })
                .collect(),
        }
    }
}

/// Dense learning rate of a block; the adversary runs on a faster clock.
fn dense_lr(cfg: &ModelConfig, block: Block) -> f64 {
    if block == Block::HeadAdv {
        cfg.lr_dense * cfg.lr_adv_scale
    } else {
        cfg.lr_dense
    }
}

fn monitor_auc(state: &ModelState, monitor: &[Episode]) -> Result<Option<f64>, TrainError> {
    let p = state.predict_observational(monitor)?;
    let y: Vec<u8> = monitor.iter().map(|e| e.y).collect();
    Ok(auc(&p, &y).ok())
}

/// Trains a fresh model through the three stages.
pub fn staged_train(
    episodes: &[Episode],
    n_clusters: usize,
    d_x: usize,
    cfg: &ModelConfig,
    plan: &TrainPlan,
) -> Result<(ModelState, TrainLog), TrainError> {
    staged_train_observed(episodes, n_clusters, d_x, cfg, plan, &mut |_| {})
}

/// [`staged_train`] with a callback on every logged row.
pub fn staged_train_observed(
    episodes: &[Episode],
    n_clusters: usize,
    d_x: usize,
    cfg: &ModelConfig,
    plan: &TrainPlan,
    observer: &mut dyn FnMut(&LogRow),
) -> Result<(ModelState, TrainLog), TrainError> {
    plan.validate()?;
    if episodes.is_empty() {
        return Err(TrainError::Contract("training set is empty".into()));
    }
    let mut state = ModelState::new(cfg.clone(), n_clusters, d_x)?;
    state.set_references(episodes);
    let mut log = TrainLog {
        seed: cfg.seed,
        lr_dense: cfg.lr_dense,
        lr_sparse: cfg.lr_sparse,
        ..TrainLog::default()
    };
    let mut opts = Optimizers::new(&state);
    let mut sampler = Sampler::new(episodes.len(), cfg.seed);
    let monitor = &episodes[..plan.monitor_size.min(episodes.len())];
    let mut step = 0u64;
    let lengths = [plan.stage_steps.warmup, plan.stage_steps.proxy, plan.stage_steps.anneal];
    for (si, &len) in lengths.iter().enumerate() {
        let stage = si as u8 + 1;
        let blocks = stage_blocks(stage);
        let mut prev_auc: Option<f64> = None;
        let mut stable = 0;
        for k in 0..len {
            let progress = k as f64 / len as f64;
            let w = stage_weights(cfg, plan, stage, progress);
            let idx = sampler.next(plan.batch_size);
            let eps: Vec<&Episode> = idx.iter().map(|&i| &episodes[i]).collect();
            let batch = Batch::from_episodes(eps.iter().copied(), n_clusters, d_x)?;
            let (ipw, clamped) = episode_weights(&state, &eps, &plan.ipw, cfg.use_ipw);
            let non_finite = |detail: String, state: &ModelState| TrainError::NonFinite {
                stage,
                step,
                detail,
                snapshot: Box::new(state.clone()),
            };
            let mut tape = match forward::composite_loss(&state.params, cfg, &batch, &ipw, &w, blocks) {
                Ok(t) => t,
                Err(NnError::NonFinite(d)) => return Err(non_finite(d, &state)),
                Err(NnError::Autodiff(e @ AutodiffError::NonFinite { .. })) => {
                    return Err(non_finite(e.to_string(), &state))
                }
                Err(e) => return Err(e.into()),
            };
            if let Err(e) = tape.graph.backward(tape.total) {
                return Err(non_finite(e.to_string(), &state));
            }
            let before = state.clone();
            for (i, p) in state.params.list.iter_mut().enumerate() {
                if !blocks.contains(&p.block) {
                    continue;
                }
                let g = tape.graph.grad(tape.bound.v(i));
                match &mut opts.slots[i] {
                    Optimizer::Adam(o) => o.step(&mut p.value, g, dense_lr(cfg, p.block)),
                    Optimizer::Adagrad(o) => o.step(&mut p.value, g, cfg.lr_sparse),
                }
            }
            if state.params.list.iter().any(|p| !p.value.is_finite()) {
                return Err(non_finite("parameters diverged".into(), &before));
            }
            step += 1;

            let mut auc_now = None;
            if stage == 1 && plan.eval_every > 0 && (k + 1) % plan.eval_every == 0 {
                auc_now = monitor_auc(&state, monitor)?;
                if let (Some(a), Some(p)) = (auc_now, prev_auc) {
                    if p > 0.0 && ((a - p) / p).abs() < plan.warmup_tol {
                        stable += 1;
                    } else {
                        stable = 0;
                    }
                }
                prev_auc = auc_now.or(prev_auc);
            }
            if (k + 1) % plan.log_every == 0 || k + 1 == len || auc_now.is_some() {
                let parts = tape.parts;
                let row = LogRow {
                    step,
                    stage,
                    main: parts.main,
                    dml: parts.dml,
                    proxy: parts.proxy,
                    adv: parts.adv,
                    ctr: parts.ctr,
                    reg: parts.reg,
                    prop: parts.prop,
                    total: parts.total,
                    lambda_dml: w.dml,
                    lambda_adv: w.adv,
                    lambda_reg: w.reg,
                    lambda_ctr: w.ctr,
                    grl: w.grl,
                    clamped,
                    auc: auc_now,
                };
                observer(&row);
                log.rows.push(row);
            }
            if stable >= 2 {
                break;
            }
        }
        log.stage_end[si] = step;
    }
    Ok((state, log))
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub state: ModelState,
    pub log: TrainLog,
    /// Predicted upload probabilities on the held-out episodes.
    pub scores: Vec<f64>,
    /// Every attributed touch uplift on the held-out episodes.
    pub attributions: Vec<f64>,
}

/// One independent training per plan seed, run in order.
pub fn multi_seed_run(
    episodes: &[Episode],
    holdout: &[Episode],
    n_clusters: usize,
    d_x: usize,
    cfg: &ModelConfig,
    plan: &TrainPlan,
) -> Result<Vec<SeedRun>, TrainError> {
    if plan.seeds.is_empty() {
        return Err(TrainError::Config("plan.seeds is empty".into()));
    }
    let attr = AttributionConfig {
        top_k: cfg.top_k,
        ..AttributionConfig::default()
    };
    plan.seeds
        .iter()
        .map(|&seed| {
            let cfg = ModelConfig { seed, ..cfg.clone() };
            let (state, log) = staged_train(episodes, n_clusters, d_x, &cfg, plan)?;
            let mut scores = Vec::with_capacity(holdout.len());
            let mut attributions = Vec::new();
            for ep in holdout {
                let a = attribute(&state, ep, &attr).map_err(|e| TrainError::Contract(e.to_string()))?;
                scores.push(a.p_full);
                attributions.extend(a.touches.iter().filter_map(|t| t.delta_hat));
            }
            Ok(SeedRun {
                seed,
                state,
                log,
                scores,
                attributions,
            })
        })
        .collect()
}
