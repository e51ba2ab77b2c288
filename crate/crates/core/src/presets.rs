//! Built-in topologies used by the experiment matrix.

use crate::model::{ConfigError, NetworkConfig};

pub const NAMES: [&str; 4] = ["3-2-4", "3-3-7", "5-3-10", "5-4-13"];

/// Budgets swept by the experiment matrix.
pub const TOTAL_PRBS: [u32; 3] = [100, 200, 300];

pub fn source(name: &str) -> Option<&'static str> {
    Some(match name {
        "3-2-4" => include_str!("../configs/3-2-4.json"),
        "3-3-7" => include_str!("../configs/3-3-7.json"),
        "5-3-10" => include_str!("../configs/5-3-10.json"),
        "5-4-13" => include_str!("../configs/5-4-13.json"),
        _ => return None,
    })
}

/// Loads a preset by its `S-K-N` name.
pub fn load(name: &str) -> Result<NetworkConfig, ConfigError> {
    let text = source(name).ok_or(ConfigError::Empty("preset with that name"))?;
    NetworkConfig::from_json(text)
}

pub fn all() -> Vec<NetworkConfig> {
    NAMES
        .iter()
        .map(|n| load(n).expect("bundled presets are valid"))
        .collect()
}
