use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Bumped whenever the config or output schema changes.
pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Provenance record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: String,
    pub schema: u32,
    pub config_hash: String,
    pub command: String,
    pub threads: usize,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn new(config: &ExperimentConfig, command: &str, threads: usize) -> Self {
        Manifest {
            version: VERSION.to_string(),
            schema: CONFIG_SCHEMA_VERSION,
            config_hash: config.hash(),
            command: command.to_string(),
            threads,
            config: config.normalized(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Manifest =
            toml::from_str(text).map_err(|e| Error::config("manifest", e.message().to_string()))?;
        m.config.validate()?;
        if m.config.hash() != m.config_hash {
            return Err(Error::config("manifest.config_hash", "does not match the embedded config"));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips() {
        let cfg = ExperimentConfig::from_toml(
            "horizon = 50\n[environment]\nkind = \"bernoulli\"\nmeans = [0.2, 0.3]\n[[policy]]\npolicy = \"exp3\"\n",
        )
        .unwrap();
        let m = Manifest::new(&cfg, "run", 1);
        let back = Manifest::from_toml(&m.to_toml()).unwrap();
        assert_eq!(back, m);
        let tampered = m.to_toml().replace("horizon = 50", "horizon = 51");
        assert!(Manifest::from_toml(&tampered).is_err());
    }
}
