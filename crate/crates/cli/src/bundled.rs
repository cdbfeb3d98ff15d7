//! Scenarios shipped with the binary.

pub const SCENARIOS: &[(&str, &str)] = &[
    ("selfsim_oracle", include_str!("../scenarios/selfsim_oracle.json")),
    ("gamma_alpha4_blowup", include_str!("../scenarios/gamma_alpha4_blowup.json")),
    ("delta", include_str!("../scenarios/delta.json")),
    ("log", include_str!("../scenarios/log.json")),
];

pub fn find(name: &str) -> Option<&'static str> {
    SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}
