//! TOML run configuration. Every section and field is optional; missing
//! values take the library defaults and unknown keys are rejected.

use std::path::{Path, PathBuf};

use pcmu::agent::TrainConfig;
use pcmu::attack::{LoadAttackerConfig, OccupancyAttackerConfig};
use pcmu::data::SynthGenConfig;
use pcmu::env::{BatteryConfig, EnvConfig, Environment, TariffSchedule};
use pcmu::mi::{KsgConfig, PsdConfig};
use pcmu::privacy::PrivacyConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub battery: BatteryConfig,
    pub tariff: TariffSchedule,
    pub train: TrainConfig,
    pub privacy: PrivacyConfig,
    pub attacker: AttackerSection,
    pub data: DataConfig,
    pub estimators: EstimatorSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackerSection {
    pub load: LoadAttackerConfig,
    pub occupancy: OccupancyAttackerConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    pub ksg: KsgConfig,
    pub psd: PsdConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct DataConfig {
    /// Load CSV to read instead of generating synthetic households.
    pub csv: Option<PathBuf>,
    pub synthetic: SynthGenConfig,
    pub split_seed: u64,
}


impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Defaults when no path is given.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Cross-field checks for every section.
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |section: &str, e: &dyn std::fmt::Display| CliError::Config(format!("[{section}] {e}"));
        self.environment().map_err(|e| cfg("env", &e))?;
        self.train.validate().map_err(|e| cfg("train", &e))?;
        self.privacy.validate().map_err(|e| cfg("privacy", &e))?;
        self.attacker.load.fit.validate().map_err(|e| cfg("attacker.load", &e))?;
        self.attacker.occupancy.fit.validate().map_err(|e| cfg("attacker.occupancy", &e))?;
        self.data.synthetic.validate().map_err(|e| cfg("data.synthetic", &e))?;
        if self.data.synthetic.horizon != self.env.horizon {
            return Err(cfg("data.synthetic", &format!("horizon {} differs from env.horizon {}", self.data.synthetic.horizon, self.env.horizon)));
        }
        if self.data.synthetic.delta_t != self.env.delta_t {
            return Err(cfg("data.synthetic", &format!("delta_t {} differs from env.delta_t {}", self.data.synthetic.delta_t, self.env.delta_t)));
        }
        if self.estimators.ksg.k_neighbors == 0 {
            return Err(cfg("estimators.ksg", &"k_neighbors must be positive"));
        }
        Ok(())
    }

    pub fn environment(&self) -> Result<Environment, CliError> {
        Environment::new(self.env.clone(), self.battery.clone(), self.tariff.clone()).map_err(|e| CliError::Config(format!("[env] {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c = RunConfig::from_toml("[train]\nlambda = 0.25\nepisodes = 40\n[env]\nn_actions = 5\n").unwrap();
        assert_eq!(c.train.lambda, 0.25);
        assert_eq!(c.train.episodes, 40);
        assert_eq!(c.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(c.env.n_actions, 5);
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_name() {
        let err = RunConfig::from_toml("[train]\nlamda = 0.5\n").unwrap_err().to_string();
        assert!(err.contains("lamda"), "{err}");
        assert!(RunConfig::from_toml("[bogus]\nx = 1\n").is_err());
    }

    #[test]
    fn cross_field_invariants_are_checked() {
        let err = RunConfig::from_toml("[env]\nn_actions = 4\n").unwrap_err().to_string();
        assert!(err.contains("[env]"), "{err}");
        let err = RunConfig::from_toml("[env]\nhorizon = 48\n").unwrap_err().to_string();
        assert!(err.contains("horizon"), "{err}");
        assert!(RunConfig::from_toml("[train]\nlambda = 1.5\n").is_err());
    }
}
