//! Causal multi-touch attribution toolkit.
//!
//! * [`scm`] synthesizes confounded touchpoint logs and answers exact
//!   interventional queries against the generating graph.
//! * [`autodiff`] is the reverse-mode engine the networks are built on.
//! * [`nn`] holds the shared backbone and its uplift, mediator, adversary,
//!   contrastive and propensity heads.
//! * [`estimators`] implements propensity weighting, the front-door plug-in
//!   estimator and deletion attribution.
//! * [`training`] runs the staged, loss-balanced training schedule.
//! * [`eval`] covers discrimination metrics, Shapley values and the
//!   propensity-stratified grouped AUUC protocol.

pub mod autodiff;
pub mod baselines;
pub mod digest;
pub mod estimators;
pub mod experiment;
pub mod eval;
pub mod glm;
pub mod math;
pub mod nn;
pub mod scm;
pub mod training;
