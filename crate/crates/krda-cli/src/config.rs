//! `--config` support: any command can take its settings from a JSON
//! document instead of flags. Explicit flags win over config values,
//! which win over defaults. A run manifest is also accepted wherever a
//! config is (its embedded `config` object is used), so any previous
//! run can be replayed from its manifest.

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;

/// Load a command config from JSON; unwraps `{"command":..,"config":..}`
/// manifest documents transparently.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let config_value = match value.get("config") {
        Some(inner) if value.get("command").is_some() => inner.clone(),
        _ => value,
    };
    serde_json::from_value(config_value)
        .with_context(|| format!("interpreting config {}", path.display()))
}

/// Flag > config > default.
pub fn resolve<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

/// Flag > config, for values without a default (caller handles None).
pub fn resolve_opt<T>(flag: Option<T>, config: Option<T>) -> Option<T> {
    flag.or(config)
}
