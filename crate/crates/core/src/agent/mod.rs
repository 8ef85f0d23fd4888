//! Deep double Q-learning controller: Q-network, target network, replay
//! buffer I, epsilon-greedy selection and the training loop.

mod tabular;
mod train;

pub use tabular::{ddql_on_mdp, tabular_cql, value_iteration, CqlConfig, DdqlOracleConfig, SmallMdp};
pub use train::{EpisodeLog, GreedyPolicy, TrainConfig, Trainer};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataError;
use crate::env::{EnvError, EnvState};
use crate::nn::{Activation, DenseStack, NnError, Parameters, RmsProp};
use crate::privacy::PrivacyError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training split is empty")]
    EmptyDataset,
    #[error("feasible mask is empty or does not match the action grid")]
    EmptyMask,
    #[error("batch is empty or targets do not match it")]
    BatchShape,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QNetConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    /// Adds normalized time of day as a third input.
    pub clock_feature: bool,
}

impl Default for QNetConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            learning_rate: 0.00025,
            clock_feature: false,
        }
    }
}

impl QNetConfig {
    pub fn input_width(&self) -> usize {
        if self.clock_feature {
            3
        } else {
            2
        }
    }

    pub fn build<R: Rng + ?Sized>(&self, n_actions: usize, rng: &mut R) -> DenseStack {
        DenseStack::new(&[self.input_width(), self.hidden, self.hidden, n_actions], Activation::Relu, Activation::Linear, rng)
    }
}

/// Network inputs for a state: level, demand over `demand_scale`, and
/// optionally `(t - 1) / horizon`.
pub fn state_features(state: &EnvState, demand_scale: f64, horizon: usize, clock: bool) -> Vec<f64> {
    let mut f = vec![state.level, state.demand_kw / demand_scale];
    if clock {
        f.push((state.t - 1) as f64 / horizon as f64);
    }
    f
}

/// Replay buffer I entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Feasible actions in the successor state.
    pub next_mask: Vec<bool>,
    /// Last step of the episode; no successor value is bootstrapped.
    pub terminal: bool,
}

/// Argmax over feasible entries; ties go to the lowest index.
pub fn masked_argmax(q: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&v, &ok)) in q.iter().zip(mask).enumerate() {
        if ok && best.is_none_or(|b| v > q[b]) {
            best = Some(i);
        }
    }
    best
}

/// Epsilon-greedy choice restricted to the feasible mask.
pub fn select_action<R: Rng + ?Sized>(qnet: &DenseStack, features: &[f64], mask: &[bool], epsilon: f64, rng: &mut R) -> Result<usize, AgentError> {
    if mask.len() != qnet.output_width() || !mask.iter().any(|&m| m) {
        return Err(AgentError::EmptyMask);
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        let feasible: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        return Ok(feasible[rng.random_range(0..feasible.len())]);
    }
    let q = qnet.predict(features)?;
    Ok(masked_argmax(&q, mask).expect("mask has a feasible entry"))
}

/// `r + gamma max_a' Q(s', a'; target)`, or `r` for terminal transitions.
/// With `mask_next` the max runs over feasible successor actions only.
pub fn td_targets(batch: &[&Transition], target: &DenseStack, gamma: f64, mask_next: bool) -> Result<Vec<f64>, AgentError> {
    batch
        .iter()
        .map(|tr| {
            if tr.terminal || gamma == 0.0 {
                return Ok(tr.reward);
            }
            let q = target.predict(&tr.next_state)?;
            let best = if mask_next {
                masked_argmax(&q, &tr.next_mask).map(|i| q[i]).ok_or(AgentError::EmptyMask)?
            } else {
                q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            Ok(tr.reward + gamma * best)
        })
        .collect()
}

/// Mean squared TD error over the taken actions and its gradient.
pub fn q_loss_and_grads(qnet: &DenseStack, batch: &[&Transition], targets: &[f64]) -> Result<(f64, DenseStack), AgentError> {
    if batch.is_empty() || batch.len() != targets.len() {
        return Err(AgentError::BatchShape);
    }
    let mut grads = qnet.zeros_like();
    let inv = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut g = vec![0.0; qnet.output_width()];
    for (tr, &y) in batch.iter().zip(targets) {
        let (q, cache) = qnet.forward(&tr.state)?;
        let err = q[tr.action] - y;
        loss += err * err * inv;
        g.fill(0.0);
        g[tr.action] = 2.0 * err * inv;
        qnet.backward_into(&cache, &g, &mut grads)?;
    }
    Ok((loss, grads))
}

/// One RMSProp step on the squared TD error; returns the pre-step loss.
pub fn update_q(qnet: &mut DenseStack, optimizer: &mut RmsProp, batch: &[&Transition], targets: &[f64]) -> Result<f64, AgentError> {
    let (loss, grads) = q_loss_and_grads(qnet, batch, targets)?;
    optimizer.apply(qnet, &grads)?;
    Ok(loss)
}

/// `target <- qnet`.
pub fn sync_target(qnet: &DenseStack, target: &mut DenseStack) {
    target.clone_from(qnet);
}
