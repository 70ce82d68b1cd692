//! Scenarios shipped in the repository's `scenarios/` directory.

use crate::error::Result;

use super::Scenario;

pub const BUILTIN: [(&str, &str); 4] = [
    ("fig3a", include_str!("../../../../scenarios/fig3a.toml")),
    ("fig3b", include_str!("../../../../scenarios/fig3b.toml")),
    ("tracking", include_str!("../../../../scenarios/tracking.toml")),
    (
        "tracking-constant",
        include_str!("../../../../scenarios/tracking-constant.toml"),
    ),
];

/// Parses every shipped scenario.
pub fn builtin_scenarios() -> Result<Vec<Scenario>> {
    BUILTIN
        .iter()
        .map(|(_, text)| Scenario::from_toml(text, None))
        .collect()
}

/// Looks up a shipped scenario by name.
pub fn builtin_scenario(name: &str) -> Option<Result<Scenario>> {
    BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| Scenario::from_toml(text, None))
}
