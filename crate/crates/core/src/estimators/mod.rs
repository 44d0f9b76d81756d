//! Identification layer: propensity weights, the front-door plug-in estimator
//! and counterfactual deletion attribution.

mod attribution;
mod frontdoor;
mod ipw;

pub use attribution::{
    attribute, cluster_uplift, deletion_uplift, top_k_mask, AttributionConfig, AttributionReport,
    AttributionSummary, EpisodeAttribution, TouchAttribution,
};
pub use frontdoor::{frontdoor_do, frontdoor_do_restricted, naive_conditional, FdSample, FrontdoorTables};
pub use ipw::{ipw_weight, ipw_weights, IpwConfig, WeightBatch};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimatorError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("positivity violation: {0}")]
    Positivity(String),
}
