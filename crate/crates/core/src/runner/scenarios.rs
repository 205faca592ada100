use super::config::parse_config_str;

/// Scenario files shipped with the binary, by id.
pub const BUILTIN_SCENARIOS: &[(&str, &str)] = &[
    ("circle-bump-0n", include_str!("../../scenarios/circle-bump-0n.cfg")),
    ("circle-liyau-heat", include_str!("../../scenarios/circle-liyau-heat.cfg")),
    ("circle-local-rho0", include_str!("../../scenarios/circle-local-rho0.cfg")),
    ("circle-wrong-mode", include_str!("../../scenarios/circle-wrong-mode.cfg")),
    ("delta-limit-circle", include_str!("../../scenarios/delta-limit-circle.cfg")),
    ("ou-gaussian-cd1", include_str!("../../scenarios/ou-gaussian-cd1.cfg")),
    ("ou-local-cd1", include_str!("../../scenarios/ou-local-cd1.cfg")),
    ("torus-bump-0n", include_str!("../../scenarios/torus-bump-0n.cfg")),
    ("torus-local-0n", include_str!("../../scenarios/torus-local-0n.cfg")),
    ("toy-neglog-n1", include_str!("../../scenarios/toy-neglog-n1.cfg")),
    ("toy-quadratic-rho1", include_str!("../../scenarios/toy-quadratic-rho1.cfg")),
    ("uniform-sanity", include_str!("../../scenarios/uniform-sanity.cfg")),
];

pub fn builtin_scenario(id: &str) -> Option<&'static str> {
    BUILTIN_SCENARIOS.iter().find(|(name, _)| *name == id).map(|(_, text)| *text)
}

/// One line per built-in scenario: id, suite and description.
pub fn list_scenarios() -> String {
    let mut out = String::new();
    for (id, text) in BUILTIN_SCENARIOS {
        match parse_config_str(text) {
            Ok(c) => out.push_str(&format!("{id:<22} {:<7} {}\n", c.suite.as_str(), c.description)),
            Err(e) => out.push_str(&format!("{id:<22} invalid: {e}\n")),
        }
    }
    out
}
