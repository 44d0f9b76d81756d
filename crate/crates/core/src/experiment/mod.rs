//! Reusable pipelines behind the command-line subcommands and the acceptance
//! checks: data splits, benchmarks, ablations and estimator checks.

mod ablation;
mod bench;
mod config;
pub mod fixtures;
mod identification;

pub use ablation::{
    cluster_match_scores, leakage, overlap, sensitivity, stability, top_clusters, LeakageArm, LeakageReport,
    OverlapRun, SensitivityRow, StabilityReportPair,
};
pub use bench::{
    auuc_sanity, benchmark, bucket_reports, evaluate_models, fit_models, kendall_summary, oracle_value, pair_scores, train_network, AuucSanity,
    BenchReport, BenchRow, FittedModels, TauRow, ALM_NAME, NAIVE_NAME,
};
pub use config::{EvalParams, ExperimentConfig, Paths};
pub use identification::{
    deconfounding, frontdoor_samples, oracle_truth, overlap_bootstrap, variance_check, ClusterRecovery,
    DeconfoundingReport, Discretization, OverlapReport,
};

use crate::baselines::BaselineError;
use crate::estimators::EstimatorError;
use crate::eval::EvalError;
use crate::nn::NnError;
use crate::scm::{Episode, ScmError};
use crate::training::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("data: {0}")]
    Data(String),
    #[error("evaluation: {0}")]
    Eval(String),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Metric(#[from] EvalError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// Leading `n_train` episodes for training, the rest held out.
pub fn split(episodes: &[Episode], n_train: usize) -> (&[Episode], &[Episode]) {
    episodes.split_at(n_train.min(episodes.len()))
}

/// Cohort index of each episode by quantile of its first covariate.
pub fn covariate_cohorts(episodes: &[Episode], cohorts: usize) -> Vec<usize> {
    let x0: Vec<f64> = episodes.iter().map(|e| e.x.first().copied().unwrap_or(0.0)).collect();
    let mut s = x0.clone();
    s.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (1..cohorts).map(|k| s[k * s.len() / cohorts]).collect();
    x0.iter().map(|v| cuts.partition_point(|c| c <= v)).collect()
}
