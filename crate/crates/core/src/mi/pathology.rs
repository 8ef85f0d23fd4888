use serde::{Deserialize, Serialize};

use super::{episode_mi, KsgConfig, MiError};
use crate::env::LoadEpisode;
use crate::privacy::{flatness_signal, FlatnessConfig};

/// The deterministic map `z_t = beta y_t + delta_c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLinearPolicy {
    pub beta: f64,
    pub delta_c: f64,
}

impl SyntheticLinearPolicy {
    pub fn apply(&self, demand: &[f64]) -> Vec<f64> {
        demand.iter().map(|y| self.beta * y + self.delta_c).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathologyRow {
    pub beta: f64,
    pub mean_flatness: f64,
    pub ksg_mi: f64,
}

/// Evaluates flatness and episode-level MI for each `beta` on the same
/// episodes.
pub fn flatness_pathology(betas: &[f64], episodes: &[LoadEpisode], flatness: &FlatnessConfig, ksg: &KsgConfig) -> Result<Vec<PathologyRow>, MiError> {
    if episodes.is_empty() {
        return Err(MiError::EmptyInput);
    }
    let demand: Vec<Vec<f64>> = episodes.iter().map(|e| e.demand_kw.clone()).collect();
    betas
        .iter()
        .map(|&beta| {
            let policy = SyntheticLinearPolicy {
                beta,
                delta_c: flatness.delta_c,
            };
            let grid: Vec<Vec<f64>> = demand.iter().map(|y| policy.apply(y)).collect();
            let steps = grid.iter().map(Vec::len).sum::<usize>();
            let total: f64 = grid.iter().flatten().map(|&z| flatness_signal(z, flatness)).sum();
            Ok(PathologyRow {
                beta,
                mean_flatness: total / steps as f64,
                ksg_mi: episode_mi(&demand, &grid, ksg)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthGenConfig};

    #[test]
    fn flatness_misleads_while_mi_does_not() {
        let episodes = generate_synthetic(&SynthGenConfig {
            n_episodes: 200,
            seed: 3,
            ..SynthGenConfig::default()
        })
        .unwrap();
        let rows = flatness_pathology(&[0.0, 0.2, 1.0], &episodes, &FlatnessConfig::default(), &KsgConfig::default()).unwrap();
        let mean_y = episodes.iter().flat_map(|e| &e.demand_kw).sum::<f64>() / (200.0 * 96.0);
        assert_eq!(rows[0].mean_flatness, 0.0);
        assert!((rows[2].mean_flatness - mean_y / 0.7).abs() < 1e-12);
        assert!((rows[2].mean_flatness - 5.0 * rows[1].mean_flatness).abs() < 1e-12);
        assert!(rows[0].ksg_mi.abs() < 0.05, "{:?}", rows[0]);
        assert!(((rows[1].ksg_mi - rows[2].ksg_mi) / rows[2].ksg_mi).abs() < 0.15);
        assert!(rows[1].ksg_mi - rows[0].ksg_mi >= 0.5 && rows[2].ksg_mi - rows[0].ksg_mi >= 0.5, "{rows:?}");
    }
}
