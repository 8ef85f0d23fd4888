//! Adversaries that see only the grid-load sequence: a demand regressor and
//! a per-step occupancy classifier, plus the metrics used to score them.

mod load;
mod metrics;
mod occupancy;

pub use load::{eval_load_attacker, train_load_attacker, LoadAttacker, LoadAttackerConfig};
pub use metrics::{balanced_accuracy, normalized_error};
pub use occupancy::{eval_occupancy_attacker, train_occupancy_attacker, Granularity, OccupancyAttacker, OccupancyAttackerConfig};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataError;
use crate::env::Trajectory;
use crate::nn::{DenseStack, NnError, Parameters, RmsProp, RmsPropConfig};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("no episodes to train or evaluate on")]
    EmptyData,
    #[error("episode {index} has length {actual}, expected {expected}")]
    Length { index: usize, expected: usize, actual: usize },
    #[error("episode {0} carries no occupancy labels")]
    MissingLabels(usize),
    #[error("evaluation set has no {0} steps")]
    MissingClass(&'static str),
    #[error("targets have zero variance")]
    ZeroVariance,
    #[error("invalid attacker config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// What an attacker is allowed to see: the grid load and the ground truth
/// it is trained to recover.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSample {
    pub grid_kw: Vec<f64>,
    pub demand_kw: Vec<f64>,
    pub occupancy: Option<Vec<bool>>,
}

impl AttackSample {
    pub fn from_trajectory(t: &Trajectory) -> Self {
        Self {
            grid_kw: t.grid_kw.clone(),
            demand_kw: t.demand_kw.clone(),
            occupancy: t.occupancy.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackMetrics {
    pub normalized_error: Option<f64>,
    pub balanced_accuracy: Option<f64>,
}

/// Shared optimisation schedule for both attackers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    /// Share of the training episodes held out for early stopping.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 100,
            patience: 10,
            batch_size: 8,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        let bad = |m: &str| Err(AttackError::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation fraction must be in [0, 1)");
        }
        Ok(())
    }
}

fn check_lengths(samples: &[AttackSample]) -> Result<usize, AttackError> {
    let first = samples.first().ok_or(AttackError::EmptyData)?;
    let t = first.grid_kw.len();
    for (index, s) in samples.iter().enumerate() {
        for actual in [s.grid_kw.len(), s.demand_kw.len()] {
            if actual != t {
                return Err(AttackError::Length { index, expected: t, actual });
            }
        }
    }
    Ok(t)
}

fn grid_scale(samples: &[AttackSample]) -> f64 {
    let m = samples.iter().flat_map(|s| &s.grid_kw).fold(0.0f64, |m, &z| m.max(z));
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Minibatch RMSProp over shuffled examples with early stopping on a held-out
/// tail; returns the parameters with the best validation loss. `loss` maps a
/// network output and example index to a loss and its output gradient.
fn fit<L>(net: DenseStack, inputs: &[Vec<f64>], cfg: &FitConfig, loss: L) -> Result<DenseStack, AttackError>
where
    L: Fn(&[f64], usize) -> Result<(f64, Vec<f64>), NnError>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((inputs.len() as f64) * cfg.validation_fraction).floor() as usize;
    let n_val = if inputs.len() - n_val == 0 { 0 } else { n_val };
    let (train, val) = order.split_at(inputs.len() - n_val);
    let mut train = train.to_vec();
    // fall back to the training loss when nothing is held out
    let monitor: Vec<usize> = if val.is_empty() { train.clone() } else { val.to_vec() };

    let eval = |net: &DenseStack| -> Result<f64, AttackError> {
        let mut total = 0.0;
        for &i in &monitor {
            total += loss(&net.predict(&inputs[i])?, i)?.0;
        }
        Ok(total / monitor.len() as f64)
    };

    let mut net = net;
    let mut opt = RmsProp::new(RmsPropConfig::with_learning_rate(cfg.learning_rate), &net);
    let mut best = (eval(&net)?, net.clone());
    let mut stale = 0;
    for _ in 0..cfg.epochs {
        train.shuffle(&mut rng);
        for chunk in train.chunks(cfg.batch_size) {
            let mut grads = net.zeros_like();
            let inv = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let (out, cache) = net.forward(&inputs[i])?;
                let (_, mut g) = loss(&out, i)?;
                g.iter_mut().for_each(|v| *v *= inv);
                net.backward_into(&cache, &g, &mut grads)?;
            }
            opt.apply(&mut net, &grads)?;
        }
        let v = eval(&net)?;
        if v < best.0 {
            best = (v, net.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(best.1)
}
