//! Offline evaluation: discrimination metrics, Shapley values, the
//! propensity-stratified grouped AUUC protocol and stability statistics.

mod auuc;
mod kmeans;
mod metrics;
pub mod protocol;
mod shapley;
mod stability;
mod variance;

pub use auuc::{
    bucket_auuc, grouped_auuc_from_pairs, propensity_buckets, uplift_curve, BucketAssignment, BucketRow,
    BucketedAuucReport, ProtocolParams,
};
pub use kmeans::{cluster_treatments, KMEANS_MAX_ITER};
pub use metrics::{auc, gauc, kendall_tau, logloss, GaucResult};
pub use protocol::{exposed_pairs, Pair, PreparedProtocol};
pub use shapley::{exact_shapley, sampled_shapley, ShapleyEstimate, MAX_EXACT_PLAYERS};
pub use stability::{histogram_overlap, ks_statistic, stability_report, StabilityReport};
pub use variance::{discretize_episodes, variance_reduction_check, VarianceReport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("capability: {0}")]
    Capability(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("degenerate stratification: {0}")]
    Degenerate(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: &'static str, message: String },
}

impl EvalError {
    /// Tags an error with the protocol stage that raised it.
    pub fn at(self, stage: &'static str) -> Self {
        match self {
            e @ EvalError::Stage { .. } => e,
            e => EvalError::Stage {
                stage,
                message: e.to_string(),
            },
        }
    }
}
