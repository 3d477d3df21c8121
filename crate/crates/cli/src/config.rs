//! JSON run configuration.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tactile::eval::EvalConfig;
use tactile::power::PowerProfile;
use tactile::sensorsim::SynthConfig;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub with_imu: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerSection {
    pub profile: PowerProfile,
    pub t_on_s: f64,
    pub t_off_s: f64,
    pub hours_per_day: f64,
    pub battery_wh: f64,
}

impl Default for PowerSection {
    fn default() -> Self {
        Self {
            profile: PowerProfile::default(),
            t_on_s: 1.0,
            t_off_s: 9.0,
            hours_per_day: 20.0,
            battery_wh: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlipSection {
    pub window: usize,
}

impl Default for SlipSection {
    fn default() -> Self {
        Self {
            window: tactile::analysis::DEFAULT_SLIP_WINDOW,
        }
    }
}

/// Everything a command may need; every field has a default, unknown keys
/// are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub model: ModelSection,
    pub eval: EvalConfig,
    pub power: PowerSection,
    pub slip: SlipSection,
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("{origin}: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        if !path.exists() {
            return Err(CliError::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path)?;
        Self::from_json(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        assert_eq!(RunConfig::from_json("{}", "t").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected_with_position() {
        let err = RunConfig::from_json("{\n  \"seed\": 1,\n  \"sede\": 2\n}", "cfg.json").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sede") && msg.contains("line 3"), "{msg}");
        assert!(RunConfig::from_json(r#"{"synth": {"sesions": 2}}"#, "t").is_err());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let c = RunConfig::from_json(r#"{"eval": {"epochs": 3}}"#, "t").unwrap();
        assert_eq!(c.eval.epochs, 3);
        assert_eq!(c.eval.batch_size, 32);
    }
}
