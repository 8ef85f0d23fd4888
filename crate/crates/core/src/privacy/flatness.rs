use serde::{Deserialize, Serialize};

use super::PrivacyError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlatnessConfig {
    /// Target grid load in kW.
    pub delta_c: f64,
}

impl Default for FlatnessConfig {
    fn default() -> Self {
        Self { delta_c: 0.7 }
    }
}

impl FlatnessConfig {
    pub fn validate(&self) -> Result<(), PrivacyError> {
        if self.delta_c > 0.0 && self.delta_c.is_finite() {
            Ok(())
        } else {
            Err(PrivacyError::InvalidConfig("delta_c must be positive".into()))
        }
    }
}

/// Relative deviation of the grid load from the target, `|z - delta_c| / delta_c`.
pub fn flatness_signal(z: f64, config: &FlatnessConfig) -> f64 {
    (z - config.delta_c).abs() / config.delta_c
}
