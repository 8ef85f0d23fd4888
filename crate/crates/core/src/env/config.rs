use serde::{Deserialize, Serialize};

use super::EnvError;

/// Physical parameters of the rechargeable battery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatteryConfig {
    /// Usable capacity in kWh.
    pub capacity_kwh: f64,
    /// Charge/discharge efficiency in (0, 1].
    pub efficiency: f64,
    /// Maximum discharge rate in kW (non-positive).
    pub rate_min_kw: f64,
    /// Maximum charge rate in kW (non-negative).
    pub rate_max_kw: f64,
    pub level_min: f64,
    pub level_max: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            capacity_kwh: 10.0,
            efficiency: 1.0,
            rate_min_kw: -4.0,
            rate_max_kw: 4.0,
            level_min: 0.0,
            level_max: 1.0,
        }
    }
}

impl BatteryConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: &str| Err(EnvError::InvalidConfig(msg.to_string()));
        if !(self.capacity_kwh > 0.0 && self.capacity_kwh.is_finite()) {
            return bad("battery capacity must be positive");
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return bad("battery efficiency must lie in (0, 1]");
        }
        if !(self.rate_min_kw <= 0.0 && self.rate_max_kw >= 0.0 && self.rate_min_kw < self.rate_max_kw) {
            return bad("battery rates must satisfy rate_min <= 0 <= rate_max with rate_min < rate_max");
        }
        if !(0.0 <= self.level_min && self.level_min < self.level_max && self.level_max <= 1.0) {
            return bad("battery levels must satisfy 0 <= level_min < level_max <= 1");
        }
        Ok(())
    }

    /// Change in charge fraction for `rate_kw` held over `delta_t` hours.
    pub fn level_delta(&self, rate_kw: f64, delta_t: f64) -> f64 {
        rate_kw * delta_t * self.efficiency / self.capacity_kwh
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// Sampling interval in hours.
    pub delta_t: f64,
    /// Steps per episode.
    pub horizon: usize,
    /// Clock hour at which step 1 begins.
    pub episode_start_hour: f64,
    /// Forbid actions that would push the grid load below zero.
    pub enforce_nonneg_grid: bool,
    /// Size of the uniform action grid; must be odd so that 0 kW is on it.
    pub n_actions: usize,
    /// Charge fraction at the start of every episode.
    pub initial_level: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            delta_t: 0.25,
            horizon: 96,
            episode_start_hour: 0.0,
            enforce_nonneg_grid: true,
            n_actions: 9,
            initial_level: 0.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self, battery: &BatteryConfig) -> Result<(), EnvError> {
        let bad = |msg: String| Err(EnvError::InvalidConfig(msg));
        if !(self.delta_t > 0.0 && self.delta_t.is_finite()) {
            return bad("delta_t must be positive".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.n_actions < 3 || self.n_actions.is_multiple_of(2) {
            return bad(format!("n_actions must be odd and >= 3 (got {}), so the zero action is on the grid", self.n_actions));
        }
        if !(0.0..24.0).contains(&self.episode_start_hour) {
            return bad("episode_start_hour must lie in [0, 24)".into());
        }
        if !(battery.level_min..=battery.level_max).contains(&self.initial_level) {
            return bad("initial_level must lie within the battery level bounds".into());
        }
        Ok(())
    }

    /// Clock hour in [0, 24) at which 1-based step `t` begins.
    pub fn clock_hour(&self, t: usize) -> f64 {
        (self.episode_start_hour + (t.saturating_sub(1)) as f64 * self.delta_t).rem_euclid(24.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffBand {
    pub start_hour: f64,
    pub end_hour: f64,
    pub price: f64,
}

/// Piecewise-constant time-of-use price per kWh over the day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffSchedule {
    pub bands: Vec<TariffBand>,
}

impl Default for TariffSchedule {
    /// Ontario winter time-of-use rates.
    fn default() -> Self {
        let band = |start_hour, end_hour, price| TariffBand {
            start_hour,
            end_hour,
            price,
        };
        Self {
            bands: vec![
                band(0.0, 7.0, 0.101),
                band(7.0, 11.0, 0.208),
                band(11.0, 17.0, 0.144),
                band(17.0, 19.0, 0.208),
                band(19.0, 24.0, 0.101),
            ],
        }
    }
}

impl TariffSchedule {
    pub fn new(mut bands: Vec<TariffBand>) -> Result<Self, EnvError> {
        bands.sort_by(|a, b| a.start_hour.total_cmp(&b.start_hour));
        let s = Self { bands };
        s.validate()?;
        Ok(s)
    }

    /// Bands must tile [0, 24) without gaps or overlaps, in order, with
    /// positive prices.
    pub fn validate(&self) -> Result<(), EnvError> {
        let invalid = |msg: String| Err(EnvError::ScheduleInvalid(msg));
        let mut cursor = 0.0;
        for b in &self.bands {
            if !(b.price > 0.0 && b.price.is_finite()) {
                return invalid(format!("price {} is not positive", b.price));
            }
            if b.start_hour != cursor {
                return invalid(format!("band starting at {} leaves a gap or overlap at hour {cursor}", b.start_hour));
            }
            if b.end_hour <= b.start_hour {
                return invalid(format!("band [{}, {}) is empty", b.start_hour, b.end_hour));
            }
            cursor = b.end_hour;
        }
        if cursor != 24.0 {
            return invalid(format!("bands end at hour {cursor} instead of 24"));
        }
        Ok(())
    }

    pub fn price_at_hour(&self, hour: f64) -> Result<f64, EnvError> {
        self.bands
            .iter()
            .find(|b| b.start_hour <= hour && hour < b.end_hour)
            .map(|b| b.price)
            .ok_or_else(|| EnvError::ScheduleInvalid(format!("hour {hour} is not covered by any band")))
    }
}
