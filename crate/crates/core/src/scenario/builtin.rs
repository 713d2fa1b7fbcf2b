use super::config::ScenarioConfig;

/// Shipped scenarios as `(name, JSON text)`.
pub const BUILTIN: &[(&str, &str)] = &[
    ("bb84_reference", include_str!("../../scenarios/bb84_reference.json")),
    ("bb84_drift_study", include_str!("../../scenarios/bb84_drift_study.json")),
    ("decoy_pns", include_str!("../../scenarios/decoy_pns.json")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(n, _)| *n)
}

/// Parses a shipped scenario by name.
pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    let (_, text) = BUILTIN.iter().find(|(n, _)| *n == name)?;
    Some(ScenarioConfig::from_json(text).expect("shipped scenarios parse"))
}
