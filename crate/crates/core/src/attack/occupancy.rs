use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::load::restore_net;
use super::{balanced_accuracy, check_lengths, fit, grid_scale, AttackError, AttackSample, FitConfig};
use crate::data::{save_params, Checkpoint};
use crate::nn::{bce_with_logits, sigmoid, Activation, DenseStack};

/// Whether labels are scored per step or as one majority label per episode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    #[default]
    PerStep,
    PerEpisode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OccupancyAttackerConfig {
    pub hidden: usize,
    pub hidden_layers: usize,
    pub granularity: Granularity,
    pub fit: FitConfig,
}

impl Default for OccupancyAttackerConfig {
    fn default() -> Self {
        Self {
            hidden: 44,
            hidden_layers: 2,
            granularity: Granularity::PerStep,
            fit: FitConfig::default(),
        }
    }
}

/// Per-step occupancy classifier over the grid-load sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyAttacker {
    pub net: DenseStack,
    pub input_scale: f64,
    pub granularity: Granularity,
}

impl OccupancyAttacker {
    pub fn horizon(&self) -> usize {
        self.net.input_width()
    }

    /// Per-step occupancy probabilities.
    pub fn probabilities(&self, grid_kw: &[f64]) -> Result<Vec<f64>, AttackError> {
        let x: Vec<f64> = grid_kw.iter().map(|z| z / self.input_scale).collect();
        Ok(self.net.predict(&x)?.into_iter().map(sigmoid).collect())
    }

    /// Thresholded predictions at the configured granularity.
    pub fn predict(&self, grid_kw: &[f64]) -> Result<Vec<bool>, AttackError> {
        let p = self.probabilities(grid_kw)?;
        Ok(match self.granularity {
            Granularity::PerStep => p.iter().map(|&v| v > 0.5).collect(),
            Granularity::PerEpisode => vec![p.iter().sum::<f64>() / p.len() as f64 > 0.5],
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.put_text("attacker/kind", "occupancy");
        let widths: Vec<u64> = std::iter::once(self.net.input_width())
            .chain(self.net.layers().iter().map(|l| l.output_width()))
            .map(|w| w as u64)
            .collect();
        ck.put_u64s("attacker/widths", widths);
        ck.put_tensor("attacker/scales", vec![1], vec![self.input_scale]);
        let g = match self.granularity {
            Granularity::PerStep => "per-step",
            Granularity::PerEpisode => "per-episode",
        };
        ck.put_text("attacker/granularity", g);
        save_params(&self.net, &mut ck, "attacker/net");
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, AttackError> {
        let net = restore_net(ck, "occupancy", Activation::Linear)?;
        let (_, scales) = ck.tensor("attacker/scales")?;
        let &[input_scale] = scales else {
            return Err(AttackError::InvalidConfig("attacker/scales must hold one value".into()));
        };
        let granularity = match ck.text("attacker/granularity")? {
            "per-step" => Granularity::PerStep,
            "per-episode" => Granularity::PerEpisode,
            other => return Err(AttackError::InvalidConfig(format!("unknown granularity {other:?}"))),
        };
        Ok(Self { net, input_scale, granularity })
    }
}

fn labels(samples: &[AttackSample], granularity: Granularity) -> Result<Vec<Vec<bool>>, AttackError> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let occ = s.occupancy.as_ref().ok_or(AttackError::MissingLabels(i))?;
            if occ.len() != s.grid_kw.len() {
                return Err(AttackError::Length { index: i, expected: s.grid_kw.len(), actual: occ.len() });
            }
            Ok(match granularity {
                Granularity::PerStep => occ.clone(),
                Granularity::PerEpisode => vec![majority(occ)],
            })
        })
        .collect()
}

fn majority(occ: &[bool]) -> bool {
    2 * occ.iter().filter(|&&o| o).count() > occ.len()
}

/// Fits per-step occupancy logits by binary cross-entropy. With per-episode
/// granularity every step is trained toward the episode's majority label.
pub fn train_occupancy_attacker(samples: &[AttackSample], config: &OccupancyAttackerConfig) -> Result<OccupancyAttacker, AttackError> {
    config.fit.validate()?;
    if config.hidden == 0 {
        return Err(AttackError::InvalidConfig("hidden width must be positive".into()));
    }
    let t = check_lengths(samples)?;
    let targets: Vec<Vec<bool>> = labels(samples, config.granularity)?
        .into_iter()
        .map(|l| if l.len() == t { l } else { vec![l[0]; t] })
        .collect();
    let input_scale = grid_scale(samples);
    let inputs: Vec<Vec<f64>> = samples.iter().map(|s| s.grid_kw.iter().map(|z| z / input_scale).collect()).collect();

    let mut widths = vec![t];
    widths.extend(std::iter::repeat_n(config.hidden, config.hidden_layers));
    widths.push(t);
    let mut rng = ChaCha8Rng::seed_from_u64(config.fit.seed);
    let net = DenseStack::new(&widths, Activation::Relu, Activation::Linear, &mut rng);
    let net = fit(net, &inputs, &config.fit, |out, i| bce_with_logits(out, &targets[i]))?;
    Ok(OccupancyAttacker { net, input_scale, granularity: config.granularity })
}

/// Balanced accuracy over every labelled unit (step or episode) of `samples`.
pub fn eval_occupancy_attacker(attacker: &OccupancyAttacker, samples: &[AttackSample]) -> Result<f64, AttackError> {
    let t = check_lengths(samples)?;
    if t != attacker.horizon() {
        return Err(AttackError::Length { index: 0, expected: attacker.horizon(), actual: t });
    }
    let truth: Vec<bool> = labels(samples, attacker.granularity)?.into_iter().flatten().collect();
    let mut predicted = Vec::with_capacity(truth.len());
    for s in samples {
        predicted.extend(attacker.predict(&s.grid_kw)?);
    }
    balanced_accuracy(&predicted, &truth)
}
