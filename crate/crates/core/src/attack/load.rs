use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_lengths, fit, grid_scale, normalized_error, AttackError, AttackSample, FitConfig};
use crate::data::{load_params, save_params, Checkpoint};
use crate::nn::{mse_loss, Activation, DenseStack};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadAttackerConfig {
    pub hidden: usize,
    pub hidden_layers: usize,
    pub fit: FitConfig,
}

impl Default for LoadAttackerConfig {
    fn default() -> Self {
        Self { hidden: 32, hidden_layers: 3, fit: FitConfig::default() }
    }
}

/// Regresses the demand sequence from the grid-load sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadAttacker {
    pub net: DenseStack,
    /// Grid load is divided by this before entering the network.
    pub input_scale: f64,
    /// Network outputs are multiplied by this to give kW.
    pub output_scale: f64,
}

impl LoadAttacker {
    pub fn horizon(&self) -> usize {
        self.net.input_width()
    }

    pub fn predict(&self, grid_kw: &[f64]) -> Result<Vec<f64>, AttackError> {
        let x: Vec<f64> = grid_kw.iter().map(|z| z / self.input_scale).collect();
        Ok(self.net.predict(&x)?.into_iter().map(|v| v * self.output_scale).collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.put_text("attacker/kind", "load");
        let widths: Vec<u64> = std::iter::once(self.net.input_width())
            .chain(self.net.layers().iter().map(|l| l.output_width()))
            .map(|w| w as u64)
            .collect();
        ck.put_u64s("attacker/widths", widths);
        ck.put_tensor("attacker/scales", vec![2], vec![self.input_scale, self.output_scale]);
        save_params(&self.net, &mut ck, "attacker/net");
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, AttackError> {
        let net = restore_net(ck, "load", Activation::Linear)?;
        let (_, scales) = ck.tensor("attacker/scales")?;
        let &[input_scale, output_scale] = scales else {
            return Err(AttackError::InvalidConfig("attacker/scales must hold two values".into()));
        };
        Ok(Self { net, input_scale, output_scale })
    }
}

/// Rebuilds a dense attacker network from its stored widths and parameters.
pub(super) fn restore_net(ck: &Checkpoint, kind: &str, head: Activation) -> Result<DenseStack, AttackError> {
    let stored = ck.text("attacker/kind")?;
    if stored != kind {
        return Err(AttackError::InvalidConfig(format!("checkpoint holds a {stored} attacker, not {kind}")));
    }
    let widths: Vec<usize> = ck.u64s("attacker/widths")?.iter().map(|&w| w as usize).collect();
    if widths.len() < 2 {
        return Err(AttackError::InvalidConfig("attacker/widths needs at least two entries".into()));
    }
    let mut net = DenseStack::new(&widths, Activation::Relu, head, &mut ChaCha8Rng::seed_from_u64(0));
    load_params(&mut net, ck, "attacker/net")?;
    Ok(net)
}

/// Fits `z^T -> y^T` by mean squared error on scaled sequences.
pub fn train_load_attacker(samples: &[AttackSample], config: &LoadAttackerConfig) -> Result<LoadAttacker, AttackError> {
    config.fit.validate()?;
    if config.hidden == 0 {
        return Err(AttackError::InvalidConfig("hidden width must be positive".into()));
    }
    let t = check_lengths(samples)?;
    let input_scale = grid_scale(samples);
    let output_scale = {
        let m = samples.iter().flat_map(|s| &s.demand_kw).fold(0.0f64, |m, &y| m.max(y));
        if m > 0.0 {
            m
        } else {
            1.0
        }
    };
    let inputs: Vec<Vec<f64>> = samples.iter().map(|s| s.grid_kw.iter().map(|z| z / input_scale).collect()).collect();
    let targets: Vec<Vec<f64>> = samples.iter().map(|s| s.demand_kw.iter().map(|y| y / output_scale).collect()).collect();

    let mut widths = vec![t];
    widths.extend(std::iter::repeat_n(config.hidden, config.hidden_layers));
    widths.push(t);
    let mut rng = ChaCha8Rng::seed_from_u64(config.fit.seed);
    let net = DenseStack::new(&widths, Activation::Relu, Activation::Linear, &mut rng);
    let net = fit(net, &inputs, &config.fit, |out, i| mse_loss(out, &targets[i]))?;
    Ok(LoadAttacker { net, input_scale, output_scale })
}

/// Normalized squared error of the attacker's demand estimates.
pub fn eval_load_attacker(attacker: &LoadAttacker, samples: &[AttackSample]) -> Result<f64, AttackError> {
    let t = check_lengths(samples)?;
    if t != attacker.horizon() {
        return Err(AttackError::Length { index: 0, expected: attacker.horizon(), actual: t });
    }
    let predicted = samples.iter().map(|s| attacker.predict(&s.grid_kw)).collect::<Result<Vec<_>, _>>()?;
    let truth: Vec<Vec<f64>> = samples.iter().map(|s| s.demand_kw.clone()).collect();
    normalized_error(&predicted, &truth)
}
