//! Pipeline configuration, stored as JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::ChainConfig;
use crate::compose::ComposeConfig;
use crate::error::{Error, Result};
use crate::field::FieldConfig;
use crate::local_warp::WarpConfig;
use crate::matching::MatcherConfig;
use crate::ransac::RansacConfig;
use crate::zone::ZoneConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatcherKind {
    #[default]
    Builtin,
    /// Correspondences come from a match file.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherSettings {
    pub kind: MatcherKind,
    pub max_matches: u32,
    pub builtin: MatcherConfig,
}

impl Default for MatcherSettings {
    fn default() -> Self {
        Self { kind: MatcherKind::Builtin, max_matches: 2000, builtin: MatcherConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DebugConfig {
    /// Write intermediate artifacts next to the output.
    pub dump: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub matcher: MatcherSettings,
    pub ransac: RansacConfig,
    pub warp: WarpConfig,
    pub field: FieldConfig,
    pub zone: ZoneConfig,
    pub chain: ChainConfig,
    pub compose: ComposeConfig,
    pub debug: DebugConfig,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.matcher.max_matches == 0 {
            return Err(Error::InvalidConfig("matcher.max_matches must be positive".into()));
        }
        if !(self.matcher.builtin.ratio > 0.0 && self.matcher.builtin.ratio <= 1.0) {
            return Err(Error::InvalidConfig("matcher.builtin.ratio must lie in (0, 1]".into()));
        }
        if !(self.chain.brightness_tol >= 0.0) {
            return Err(Error::InvalidConfig("chain.brightness_tol must be non-negative".into()));
        }
        self.ransac.validate()?;
        self.warp.validate()?;
        self.field.validate()?;
        self.zone.validate()?;
        self.compose.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = PipelineConfig::default();
        let back = PipelineConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(PipelineConfig::from_json("{}").unwrap(), cfg);
    }

    #[test]
    fn partial_override() {
        let cfg = PipelineConfig::from_json(r#"{"zone":{"v":3.5},"matcher":{"kind":"file"}}"#).unwrap();
        assert_eq!(cfg.zone.v, 3.5);
        assert_eq!(cfg.zone.range_divisor, 20);
        assert_eq!(cfg.matcher.kind, MatcherKind::File);
    }

    #[test]
    fn unknown_and_invalid_keys_rejected() {
        assert!(matches!(PipelineConfig::from_json(r#"{"zone":{"vv":1}}"#), Err(Error::InvalidConfig(_))));
        assert!(matches!(PipelineConfig::from_json(r#"{"extra":true}"#), Err(Error::InvalidConfig(_))));
        assert!(matches!(PipelineConfig::from_json(r#"{"field":{"d_max":-1}}"#), Err(Error::InvalidConfig(_))));
        assert!(matches!(PipelineConfig::from_json("[1"), Err(Error::InvalidConfig(_))));
    }
}
