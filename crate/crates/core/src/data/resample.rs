use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, Timelike};

use super::{DataError, LoadCsvRecord, LoadEpisode};
use crate::env::EnvConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct ResampleReport {
    pub episodes: Vec<LoadEpisode>,
    /// Days skipped because at least one interval had no samples.
    pub dropped_days: usize,
}

#[derive(Clone, Default)]
struct Bin {
    sum: f64,
    count: usize,
    occupied: usize,
    labelled: usize,
}

/// Averages raw samples into `delta_t` intervals and cuts them into daily
/// episodes starting at the configured clock hour. Occupancy is decided by
/// majority vote within an interval (ties count as occupied).
pub fn resample_to_episodes(records: &[LoadCsvRecord], config: &EnvConfig) -> Result<ResampleReport, DataError> {
    let per_day = 24.0 / config.delta_t;
    if (per_day - per_day.round()).abs() > 1e-9 || per_day.round() as usize != config.horizon {
        return Err(DataError::InvalidConfig(format!(
            "delta_t {} h does not divide a day into {} steps",
            config.delta_t, config.horizon
        )));
    }
    let bin_seconds = config.delta_t * 3600.0;
    let shift = Duration::milliseconds((config.episode_start_hour * 3_600_000.0).round() as i64);
    let mut days: BTreeMap<NaiveDate, Vec<Bin>> = BTreeMap::new();
    for r in records {
        let local = r.timestamp.naive_local() - shift;
        let secs = local.time().num_seconds_from_midnight() as f64 + local.time().nanosecond() as f64 * 1e-9;
        let idx = ((secs / bin_seconds).floor() as usize).min(config.horizon - 1);
        let bins = days.entry(local.date()).or_insert_with(|| vec![Bin::default(); config.horizon]);
        let b = &mut bins[idx];
        b.sum += r.power_kw;
        b.count += 1;
        if let Some(occ) = r.occupancy {
            b.labelled += 1;
            b.occupied += occ as usize;
        }
    }
    let mut episodes = Vec::new();
    let mut dropped_days = 0;
    for (date, bins) in days {
        if bins.iter().any(|b| b.count == 0) {
            dropped_days += 1;
            continue;
        }
        let occupancy = bins
            .iter()
            .all(|b| b.labelled > 0)
            .then(|| bins.iter().map(|b| 2 * b.occupied >= b.labelled).collect());
        episodes.push(LoadEpisode {
            demand_kw: bins.iter().map(|b| b.sum / b.count as f64).collect(),
            occupancy,
            label: date.to_string(),
        });
    }
    Ok(ResampleReport { episodes, dropped_days })
}
