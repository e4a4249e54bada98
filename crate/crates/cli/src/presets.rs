//! Built-in experiment configurations at desk scale.

pub const PRESETS: [(&str, &str); 4] = [
    ("fig2_delta0", include_str!("../presets/fig2_delta0.json")),
    ("fig3_scan", include_str!("../presets/fig3_scan.json")),
    ("fig4", include_str!("../presets/fig4.json")),
    ("fig5", include_str!("../presets/fig5.json")),
];

pub fn find(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    #[test]
    fn every_preset_validates() {
        for (name, text) in PRESETS {
            ExperimentConfig::from_json(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(find("fig4.json").is_some());
    }
}
