//! Shipped run configurations, one per reproduced figure.

use std::path::Path;

use crate::config::RunConfig;
use crate::error::{Error, Result};

const PRESETS: &[(&str, &str)] = &[
    ("coil-model", include_str!("../presets/coil-model.toml")),
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("fig5", include_str!("../presets/fig5.toml")),
    ("fig6", include_str!("../presets/fig6.toml")),
    ("fig7", include_str!("../presets/fig7.toml")),
    ("fig8b", include_str!("../presets/fig8b.toml")),
];

/// Preset names in lexicographic order.
pub fn list_presets() -> Vec<&'static str> {
    let mut names: Vec<_> = PRESETS.iter().map(|(n, _)| *n).collect();
    names.sort_unstable();
    names
}

/// TOML source of a preset.
pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn preset(name: &str) -> Result<RunConfig> {
    let src = preset_source(name).ok_or_else(|| {
        Error::config(
            "preset",
            format!("unknown preset `{name}`; available: {}", list_presets().join(", ")),
        )
    })?;
    RunConfig::parse(src, Path::new(&format!("preset:{name}")))
}
