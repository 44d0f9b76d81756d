//! Experiment configs shipped with the crate.

use super::{ExperimentConfig, ExperimentError};

const FIXTURES: &[(&str, &str)] = &[
    ("bench", include_str!("../../fixtures/experiments/bench.toml")),
    ("leakage", include_str!("../../fixtures/experiments/leakage.toml")),
    ("sparse", include_str!("../../fixtures/experiments/sparse.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    FIXTURES.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    FIXTURES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str) -> Result<ExperimentConfig, ExperimentError> {
    let text = source(name).ok_or_else(|| ExperimentError::Config {
        field: "fixture".into(),
        reason: format!("unknown experiment fixture `{name}`"),
    })?;
    ExperimentConfig::from_toml(text)
}
