//! Versioned fixture configs shipped with the crate.

use super::{ScmConfig, ScmError};

const FIXTURES: &[(&str, &str)] = &[
    ("c1", include_str!("../../fixtures/c1.toml")),
    ("deconf", include_str!("../../fixtures/deconf.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    FIXTURES.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    FIXTURES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str) -> Result<ScmConfig, ScmError> {
    let text = source(name).ok_or_else(|| ScmError::Missing(format!("fixture `{name}`")))?;
    ScmConfig::from_toml(text)
}
