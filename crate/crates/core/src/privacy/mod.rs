//! Privacy leakage signals: flatness, and the mutual-information signals
//! estimated by the feedforward and recurrent H-networks.

mod discretizer;
mod flatness;
mod hnet_ff;
mod hnet_rnn;
mod table;

pub use discretizer::Discretizer;
pub use flatness::{flatness_signal, FlatnessConfig};
pub use hnet_ff::{leakage_pointwise_iid, HNetFeedforward, StepPair};
pub use hnet_rnn::{leakage_episode_general, EpisodePair, HNetRecurrent, RecurrentParams};
pub use table::{leakage_table_general, PrivacyTable};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::NnError;

#[derive(Debug, Error, PartialEq)]
pub enum PrivacyError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("replay buffer is empty")]
    EmptyBuffer,
    #[error("lambda {0} outside [0, 1]")]
    LambdaOutOfRange(f64),
    #[error("demand and grid sequences differ in length or are empty")]
    EpisodeShape,
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrivacyBackend {
    Flatness,
    MiIid,
    MiGeneral,
}

impl PrivacyBackend {
    pub const ALL: [PrivacyBackend; 3] = [PrivacyBackend::Flatness, PrivacyBackend::MiIid, PrivacyBackend::MiGeneral];

    pub fn as_str(self) -> &'static str {
        match self {
            PrivacyBackend::Flatness => "flatness",
            PrivacyBackend::MiIid => "mi-iid",
            PrivacyBackend::MiGeneral => "mi-general",
        }
    }
}

impl std::fmt::Display for PrivacyBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PrivacyBackend {
    type Err = PrivacyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| PrivacyError::InvalidConfig(format!("unknown privacy backend {s:?}")))
    }
}

/// How the recurrent backend turns H-network output into per-step rewards.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneralSignal {
    /// One buffer-averaged value per step index, shared by every action.
    Table,
    /// The realized `log P(y_t | y^{t-1}, z^T)` of the episode just played,
    /// assigned once the episode is complete.
    Episode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrivacyConfig {
    pub flatness: FlatnessConfig,
    pub n_bins: usize,
    pub hnet_learning_rate: f64,
    pub ff_hidden: usize,
    pub ff_buffer_steps: usize,
    pub ff_batch: usize,
    pub rnn_hidden: usize,
    pub rnn_layers: usize,
    pub episode_buffer: usize,
    pub rnn_batch: usize,
    /// Minibatches per H-network refresh.
    pub refresh_minibatches: usize,
    pub general_signal: GeneralSignal,
    /// Divide MI signals by `ln n_bins`.
    pub normalize: bool,
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        Self {
            flatness: FlatnessConfig::default(),
            n_bins: 32,
            hnet_learning_rate: 0.001,
            ff_hidden: 64,
            ff_buffer_steps: 10_000,
            ff_batch: 128,
            rnn_hidden: 44,
            rnn_layers: 2,
            episode_buffer: 500,
            rnn_batch: 64,
            refresh_minibatches: 25,
            general_signal: GeneralSignal::Episode,
            normalize: false,
        }
    }
}

impl PrivacyConfig {
    pub fn validate(&self) -> Result<(), PrivacyError> {
        self.flatness.validate()?;
        let bad = |m: &str| Err(PrivacyError::InvalidConfig(m.to_string()));
        if self.n_bins < 2 {
            return bad("n_bins must be at least 2");
        }
        if !(self.hnet_learning_rate > 0.0) {
            return bad("hnet_learning_rate must be positive");
        }
        if [self.ff_hidden, self.ff_buffer_steps, self.ff_batch, self.rnn_hidden, self.rnn_layers, self.episode_buffer, self.rnn_batch, self.refresh_minibatches]
            .contains(&0)
        {
            return bad("sizes must be positive");
        }
        Ok(())
    }
}

/// `lambda g + (1 - lambda) privacy`; the reward is its negation.
pub fn combined_loss(cost_signal: f64, privacy_term: f64, lambda: f64) -> Result<f64, PrivacyError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(PrivacyError::LambdaOutOfRange(lambda));
    }
    Ok(lambda * cost_signal + (1.0 - lambda) * privacy_term)
}
