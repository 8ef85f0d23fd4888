use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DataError, LoadEpisode};

/// Occupancy chain parameters that apply from `start_hour` until the next
/// period begins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancyPeriod {
    pub start_hour: f64,
    /// Probability of remaining home for another interval.
    pub stay_occupied: f64,
    /// Probability of remaining away for another interval.
    pub stay_vacant: f64,
}

/// Household simulator: a time-of-day dependent two-state occupancy chain
/// gates appliance events on top of a base load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthGenConfig {
    pub seed: u64,
    pub n_episodes: usize,
    pub horizon: usize,
    pub delta_t: f64,
    pub base_load_kw: f64,
    /// Probability the household is home at the first interval.
    pub initial_occupied: f64,
    /// Sorted by `start_hour`; the first period must start at hour 0.
    pub periods: Vec<OccupancyPeriod>,
    /// Per-interval probability that an appliance switches on while occupied.
    /// Running appliances stop as soon as the household becomes vacant.
    pub event_rate: f64,
    pub event_magnitudes_kw: Vec<f64>,
    pub event_weights: Vec<f64>,
    pub event_min_intervals: usize,
    pub event_max_intervals: usize,
    /// Standard deviation of additive Gaussian noise, truncated at three sigma.
    pub noise_std_kw: f64,
    pub max_load_kw: f64,
}

impl Default for SynthGenConfig {
    fn default() -> Self {
        let period = |start_hour, stay_occupied, stay_vacant| OccupancyPeriod {
            start_hour,
            stay_occupied,
            stay_vacant,
        };
        Self {
            seed: 0,
            n_episodes: 300,
            horizon: 96,
            delta_t: 0.25,
            base_load_kw: 0.25,
            initial_occupied: 0.9,
            periods: vec![period(0.0, 0.95, 0.95), period(7.0, 0.85, 0.85), period(17.0, 0.9, 0.85), period(22.0, 0.95, 0.9)],
            event_rate: 0.1,
            event_magnitudes_kw: vec![0.5, 1.0, 2.0],
            event_weights: vec![0.5, 0.3, 0.2],
            event_min_intervals: 4,
            event_max_intervals: 16,
            noise_std_kw: 0.03,
            max_load_kw: 6.0,
        }
    }
}

impl SynthGenConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidConfig(m.to_string()));
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.horizon == 0 || !(self.delta_t > 0.0) {
            return bad("horizon and delta_t must be positive");
        }
        if !prob(self.initial_occupied) || !prob(self.event_rate) {
            return bad("probabilities must lie in [0, 1]");
        }
        if self.periods.is_empty() || self.periods[0].start_hour != 0.0 {
            return bad("occupancy periods must start at hour 0");
        }
        if self.periods.windows(2).any(|w| w[0].start_hour >= w[1].start_hour) {
            return bad("occupancy periods must be sorted by start hour");
        }
        if self.periods.iter().any(|p| !prob(p.stay_occupied) || !prob(p.stay_vacant)) {
            return bad("stay probabilities must lie in [0, 1]");
        }
        if self.event_magnitudes_kw.is_empty()
            || self.event_magnitudes_kw.len() != self.event_weights.len()
            || self.event_magnitudes_kw.iter().any(|&m| !(m >= 0.0))
            || self.event_weights.iter().any(|&w| !(w >= 0.0))
            || self.event_weights.iter().sum::<f64>() <= 0.0
        {
            return bad("event magnitudes must be non-negative with matching non-negative weights");
        }
        if self.event_min_intervals == 0 || self.event_min_intervals > self.event_max_intervals {
            return bad("event durations must satisfy 1 <= min <= max");
        }
        if !(self.base_load_kw >= 0.0) || !(self.noise_std_kw >= 0.0) || !(self.max_load_kw >= self.base_load_kw) {
            return bad("loads must be non-negative and max_load_kw >= base_load_kw");
        }
        Ok(())
    }

    fn period_at(&self, hour: f64) -> &OccupancyPeriod {
        self.periods.iter().rev().find(|p| p.start_hour <= hour).unwrap_or(&self.periods[0])
    }

    fn pick_magnitude(&self, rng: &mut ChaCha8Rng) -> f64 {
        let total: f64 = self.event_weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (m, w) in self.event_magnitudes_kw.iter().zip(&self.event_weights) {
            if u < *w {
                return *m;
            }
            u -= w;
        }
        *self.event_magnitudes_kw.last().unwrap()
    }
}

/// Deterministic per seed. Loads are clamped to `[0, max_load_kw]`.
pub fn generate_synthetic(config: &SynthGenConfig) -> Result<Vec<LoadEpisode>, DataError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise_std_kw.max(f64::MIN_POSITIVE)).expect("finite std");
    let mut episodes = Vec::with_capacity(config.n_episodes);
    for e in 0..config.n_episodes {
        let mut occupied = rng.random::<f64>() < config.initial_occupied;
        let mut active: Vec<(f64, usize)> = Vec::new();
        let mut demand = Vec::with_capacity(config.horizon);
        let mut occupancy = Vec::with_capacity(config.horizon);
        for t in 0..config.horizon {
            if t > 0 {
                let p = config.period_at((t as f64 * config.delta_t) % 24.0);
                let stay = if occupied { p.stay_occupied } else { p.stay_vacant };
                if rng.random::<f64>() >= stay {
                    occupied = !occupied;
                }
            }
            if !occupied {
                // appliances switch off when the household leaves
                active.clear();
            }
            if occupied && rng.random::<f64>() < config.event_rate {
                let duration = rng.random_range(config.event_min_intervals..=config.event_max_intervals);
                active.push((config.pick_magnitude(&mut rng), duration));
            }
            let events: f64 = active.iter().map(|(m, _)| m).sum();
            active.iter_mut().for_each(|(_, d)| *d -= 1);
            active.retain(|(_, d)| *d > 0);
            let eps = if config.noise_std_kw > 0.0 {
                let s = 3.0 * config.noise_std_kw;
                noise.sample(&mut rng).clamp(-s, s)
            } else {
                0.0
            };
            demand.push((config.base_load_kw + events + eps).clamp(0.0, config.max_load_kw));
            occupancy.push(occupied);
        }
        episodes.push(LoadEpisode {
            demand_kw: demand,
            occupancy: Some(occupancy),
            label: format!("synthetic-{e}"),
        });
    }
    Ok(episodes)
}
