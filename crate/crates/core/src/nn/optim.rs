use serde::{Deserialize, Serialize};

use super::{NnError, Parameters};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            decay: 0.99,
            epsilon: 1e-8,
        }
    }
}

impl RmsPropConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// RMSProp with the squared-gradient accumulator laid out like the parameters.
///
/// `v <- rho v + (1 - rho) g^2`, `p <- p - lr g / sqrt(v + eps)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub config: RmsPropConfig,
    accum: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new<P: Parameters>(config: RmsPropConfig, params: &P) -> Self {
        Self {
            config,
            accum: params.param_slices().iter().map(|s| vec![0.0; s.len()]).collect(),
        }
    }

    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.accum
    }

    pub fn from_parts(config: RmsPropConfig, accum: Vec<Vec<f64>>) -> Self {
        Self { config, accum }
    }

    pub fn apply<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<(), NnError> {
        let gs = grads.param_slices();
        let mut ps = params.param_slices_mut();
        let aligned = ps.len() == self.accum.len()
            && gs.len() == self.accum.len()
            && self
                .accum
                .iter()
                .zip(ps.iter())
                .zip(gs.iter())
                .all(|((a, p), g)| a.len() == p.len() && a.len() == g.len());
        if !aligned {
            return Err(NnError::ShapeMismatch);
        }
        let RmsPropConfig {
            learning_rate: lr,
            decay: rho,
            epsilon: eps,
        } = self.config;
        for ((p, g), v) in ps.iter_mut().zip(gs).zip(self.accum.iter_mut()) {
            for ((pi, &gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                *vi = rho * *vi + (1.0 - rho) * gi * gi;
                *pi -= lr * gi / (*vi + eps).sqrt();
            }
        }
        Ok(())
    }
}
