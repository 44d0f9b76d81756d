//! Synthetic structural causal model and its interventional oracle.

mod config;
mod generate;
pub mod fixtures;
pub mod io;
mod oracle;

pub use config::{sensitivity_grid, ScmConfig, SeqLenRange, MAX_ENUMERATED_STATES};
pub use generate::{generate, Episode, Generated, Latent, LatentStore, TouchEvent};
pub use oracle::{
    oracle_do_expectation, oracle_uplift, quantile_bin_means, GroundTruth, Oracle, OracleMethod,
    OracleValue,
};

#[derive(Debug, thiserror::Error)]
pub enum ScmError {
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("cluster id {cluster} out of range for {n_clusters} clusters")]
    InvalidCluster { cluster: usize, n_clusters: usize },
    #[error("capability: {0}")]
    Capability(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("missing artifact: {0}")]
    Missing(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
