//! Versioned TOML run configuration.

use std::path::Path;

use darnn_core::data::{DomainShift, SynthConfig};
use darnn_core::evaluation::ExperimentConfig;
use darnn_core::features::FeatureConfig;
use darnn_core::{Error, Precision, Result};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub precision: Precision,
    /// λ values for the optional sweep after a cross-domain run.
    pub lambdas: Vec<f64>,
    pub features: FeatureConfig,
    pub synth: SynthConfig,
    /// Per-driver shifts; when non-empty `synth` writes one driver per entry.
    pub drivers: Vec<DomainShift>,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            precision: Precision::F64,
            lambdas: Vec::new(),
            features: FeatureConfig::default(),
            synth: SynthConfig::default(),
            drivers: Vec::new(),
            experiment: ExperimentConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let probe: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {}", e.message())))?;
        if !probe.contains_key("version") {
            return Err(Error::Config(format!("{origin}: missing `version` (expected {CONFIG_VERSION})")));
        }
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "{origin}: config version {} is not supported (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                RunConfig::parse(&text, &p.display().to_string())
            }
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::parse(&text, "echo").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse("version = 1\n[experiment.train]\nlearning_rate = 0.1\n", "x").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert!(RunConfig::parse("version = 1\nbogus = 2\n", "x").is_err());
    }

    #[test]
    fn version_is_required_and_checked() {
        assert!(RunConfig::parse("precision = \"f32\"\n", "x").is_err());
        assert!(RunConfig::parse("version = 2\n", "x").is_err());
        let cfg = RunConfig::parse("version = 1\nprecision = \"f32\"\n", "x").unwrap();
        assert_eq!(cfg.precision, Precision::F32);
    }

    #[test]
    fn augmentation_can_be_switched_off() {
        let cfg = RunConfig::parse("version = 1\n[experiment]\naugment = false\n", "x").unwrap();
        assert_eq!(cfg.experiment.augment, None);
        let back = RunConfig::parse(&cfg.to_toml().unwrap(), "echo").unwrap();
        assert_eq!(back, cfg);
        let cfg = RunConfig::parse("version = 1\n[experiment.augment]\nmin_len = 10\nmax_len = 20\n", "x").unwrap();
        assert_eq!(cfg.experiment.augment.unwrap().min_len, 10);
    }
}
