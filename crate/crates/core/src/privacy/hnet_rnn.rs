use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Discretizer, PrivacyError};
use crate::buffer::RingBuffer;
use crate::nn::{log_softmax, softmax_xent, Activation, DenseStack, Direction, LstmStack, Parameters, RmsProp, RmsPropConfig, PROB_FLOOR};

/// Demand and grid-load sequences of one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodePair {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

/// The learnable parts of [`HNetRecurrent`], walked z-stream, y-stream, head.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentParams {
    /// Bidirectional over the whole grid-load sequence.
    pub z_stream: LstmStack,
    /// Forward-only over the shifted demand history `(0, y_1, ..., y_{T-1})`.
    pub y_stream: LstmStack,
    /// Per-step softmax head over `[z-stream, y-stream]` features.
    pub head: DenseStack,
}

impl Parameters for RecurrentParams {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = self.z_stream.param_slices();
        v.extend(self.y_stream.param_slices());
        v.extend(self.head.param_slices());
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.z_stream.param_slices_mut();
        v.extend(self.y_stream.param_slices_mut());
        v.extend(self.head.param_slices_mut());
        v
    }

    fn zeros_like(&self) -> Self {
        Self {
            z_stream: self.z_stream.zeros_like(),
            y_stream: self.y_stream.zeros_like(),
            head: self.head.zeros_like(),
        }
    }
}

/// Estimates `P(y_t | y^{t-1}, z^T)` for every step of an episode.
#[derive(Clone, Debug, PartialEq)]
pub struct HNetRecurrent {
    pub params: RecurrentParams,
    pub optimizer: RmsProp,
}

struct Forward {
    logits: Vec<Vec<f64>>,
    z_cache: crate::nn::LstmCache,
    y_cache: crate::nn::LstmCache,
    head_caches: Vec<crate::nn::DenseCache>,
}

impl HNetRecurrent {
    pub fn new<R: Rng + ?Sized>(n_bins: usize, hidden: usize, layers: usize, learning_rate: f64, rng: &mut R) -> Self {
        let z_stream = LstmStack::new(1, hidden, layers, Direction::Bidirectional, rng);
        let y_stream = LstmStack::new(1, hidden, layers, Direction::Forward, rng);
        let head = DenseStack::new(&[3 * hidden, n_bins], Activation::Linear, Activation::Linear, rng);
        let params = RecurrentParams { z_stream, y_stream, head };
        let optimizer = RmsProp::new(RmsPropConfig::with_learning_rate(learning_rate), &params);
        Self { params, optimizer }
    }

    pub fn n_bins(&self) -> usize {
        self.params.head.output_width()
    }

    pub fn zero_head(&mut self) {
        for layer in self.params.head.layers_mut() {
            layer.weights.as_mut_slice().fill(0.0);
            layer.bias.fill(0.0);
        }
    }

    fn inputs(y: &[f64], z: &[f64], disc: &Discretizer) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), PrivacyError> {
        if y.is_empty() || y.len() != z.len() {
            return Err(PrivacyError::EpisodeShape);
        }
        let zs = z.iter().map(|&v| vec![disc.scale(v)]).collect();
        let ys = std::iter::once(0.0)
            .chain(y[..y.len() - 1].iter().map(|&v| disc.scale(v)))
            .map(|v| vec![v])
            .collect();
        Ok((zs, ys))
    }

    fn forward(&self, y: &[f64], z: &[f64], disc: &Discretizer) -> Result<Forward, PrivacyError> {
        let (zs, ys) = Self::inputs(y, z, disc)?;
        let (hz, z_cache) = self.params.z_stream.forward(&zs)?;
        let (hy, y_cache) = self.params.y_stream.forward(&ys)?;
        let mut logits = Vec::with_capacity(y.len());
        let mut head_caches = Vec::with_capacity(y.len());
        for (a, b) in hz.iter().zip(&hy) {
            let features: Vec<f64> = a.iter().chain(b).copied().collect();
            let (out, cache) = self.params.head.forward(&features)?;
            logits.push(out);
            head_caches.push(cache);
        }
        Ok(Forward {
            logits,
            z_cache,
            y_cache,
            head_caches,
        })
    }

    /// Log-probabilities over bins for every step.
    pub fn log_distributions(&self, y: &[f64], z: &[f64], disc: &Discretizer) -> Result<Vec<Vec<f64>>, PrivacyError> {
        Ok(self.forward(y, z, disc)?.logits.iter().map(|l| log_softmax(l)).collect())
    }

    /// `ln P(bin(y_t) | y^{t-1}, z^T)` for each `t`, floored to stay finite.
    pub fn log_probs(&self, y: &[f64], z: &[f64], disc: &Discretizer) -> Result<Vec<f64>, PrivacyError> {
        let floor = PROB_FLOOR.ln();
        Ok(self
            .log_distributions(y, z, disc)?
            .iter()
            .zip(y)
            .map(|(lp, &yt)| lp[disc.bin(yt)].max(floor))
            .collect())
    }

    /// Cross-entropy averaged over all steps of all episodes, and its gradient.
    pub fn loss_and_grads(&self, batch: &[&EpisodePair], disc: &Discretizer) -> Result<(f64, RecurrentParams), PrivacyError> {
        let mut grads = self.params.zeros_like();
        let steps: usize = batch.iter().map(|e| e.y.len()).sum();
        let inv = 1.0 / steps as f64;
        let hidden2 = self.params.z_stream.output_width();
        let mut loss = 0.0;
        for ep in batch {
            let fwd = self.forward(&ep.y, &ep.z, disc)?;
            let mut gz = Vec::with_capacity(ep.y.len());
            let mut gy = Vec::with_capacity(ep.y.len());
            for ((logits, cache), &yt) in fwd.logits.iter().zip(&fwd.head_caches).zip(&ep.y) {
                let (l, mut g) = softmax_xent(logits, disc.bin(yt))?;
                loss += l * inv;
                g.iter_mut().for_each(|v| *v *= inv);
                let dx = self.params.head.backward_into(cache, &g, &mut grads.head)?;
                gz.push(dx[..hidden2].to_vec());
                gy.push(dx[hidden2..].to_vec());
            }
            self.params.z_stream.backward_into(&fwd.z_cache, &gz, &mut grads.z_stream)?;
            self.params.y_stream.backward_into(&fwd.y_cache, &gy, &mut grads.y_stream)?;
        }
        Ok((loss, grads))
    }

    pub fn train_step(&mut self, batch: &[&EpisodePair], disc: &Discretizer) -> Result<f64, PrivacyError> {
        if batch.is_empty() {
            return Err(PrivacyError::EmptyBuffer);
        }
        let (loss, grads) = self.loss_and_grads(batch, disc)?;
        self.optimizer.apply(&mut self.params, &grads)?;
        Ok(loss)
    }

    pub fn refresh<R: Rng + ?Sized>(
        &mut self,
        buffer: &RingBuffer<EpisodePair>,
        disc: &Discretizer,
        batch: usize,
        minibatches: usize,
        rng: &mut R,
    ) -> Result<Option<f64>, PrivacyError> {
        if buffer.is_empty() || minibatches == 0 {
            return Ok(None);
        }
        let mut total = 0.0;
        for _ in 0..minibatches {
            let sample = buffer.sample(batch, rng);
            total += self.train_step(&sample, disc)?;
        }
        Ok(Some(total / minibatches as f64))
    }
}

/// Realized per-step leakage of one complete episode.
pub fn leakage_episode_general(hnet: &HNetRecurrent, y: &[f64], z: &[f64], disc: &Discretizer) -> Result<Vec<f64>, PrivacyError> {
    hnet.log_probs(y, z, disc)
}
