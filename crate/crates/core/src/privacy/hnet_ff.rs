use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Discretizer, PrivacyError};
use crate::buffer::RingBuffer;
use crate::nn::{softmax, softmax_xent, Activation, DenseStack, Parameters, RmsProp, RmsPropConfig, PROB_FLOOR};

/// One observed `(y_t, z_t)` pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepPair {
    pub y: f64,
    pub z: f64,
}

/// Estimates `P(y_t | z_t)` as a categorical over demand bins.
#[derive(Clone, Debug, PartialEq)]
pub struct HNetFeedforward {
    pub net: DenseStack,
    pub optimizer: RmsProp,
}

impl HNetFeedforward {
    pub fn new<R: Rng + ?Sized>(n_bins: usize, hidden: usize, learning_rate: f64, rng: &mut R) -> Self {
        let net = DenseStack::new(&[1, hidden, hidden, n_bins], Activation::Relu, Activation::Linear, rng);
        let optimizer = RmsProp::new(RmsPropConfig::with_learning_rate(learning_rate), &net);
        Self { net, optimizer }
    }

    pub fn n_bins(&self) -> usize {
        self.net.output_width()
    }

    /// Zeroes the output layer so the prediction is uniform.
    pub fn zero_head(&mut self) {
        let last = self.net.layers_mut().last_mut().expect("dense stack has layers");
        last.weights.as_mut_slice().fill(0.0);
        last.bias.fill(0.0);
    }

    pub fn distribution(&self, z: f64, disc: &Discretizer) -> Result<Vec<f64>, PrivacyError> {
        Ok(softmax(&self.net.predict(&[disc.scale(z)])?))
    }

    /// `ln P(bin(y) | z)`, floored so it stays finite.
    pub fn log_prob(&self, y: f64, z: f64, disc: &Discretizer) -> Result<f64, PrivacyError> {
        let p = self.distribution(z, disc)?;
        Ok(p[disc.bin(y)].max(PROB_FLOOR).ln())
    }

    /// Mean cross-entropy over the batch and its gradient.
    pub fn loss_and_grads(&self, batch: &[StepPair], disc: &Discretizer) -> Result<(f64, DenseStack), PrivacyError> {
        let mut grads = self.net.zeros_like();
        let mut loss = 0.0;
        let inv = 1.0 / batch.len() as f64;
        for pair in batch {
            let (logits, cache) = self.net.forward(&[disc.scale(pair.z)])?;
            let (l, mut g) = softmax_xent(&logits, disc.bin(pair.y))?;
            loss += l * inv;
            g.iter_mut().for_each(|v| *v *= inv);
            self.net.backward_into(&cache, &g, &mut grads)?;
        }
        Ok((loss, grads))
    }

    /// One optimizer step; returns the loss before the step.
    pub fn train_step(&mut self, batch: &[StepPair], disc: &Discretizer) -> Result<f64, PrivacyError> {
        if batch.is_empty() {
            return Err(PrivacyError::EmptyBuffer);
        }
        let (loss, grads) = self.loss_and_grads(batch, disc)?;
        self.optimizer.apply(&mut self.net, &grads)?;
        Ok(loss)
    }

    /// `minibatches` steps on uniform samples; mean pre-step loss, or `None`
    /// when the buffer is empty.
    pub fn refresh<R: Rng + ?Sized>(
        &mut self,
        buffer: &RingBuffer<StepPair>,
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
            let sample: Vec<StepPair> = buffer.sample(batch, rng).into_iter().copied().collect();
            total += self.train_step(&sample, disc)?;
        }
        Ok(Some(total / minibatches as f64))
    }
}

/// Pointwise i.i.d. leakage signal `ln P(bin(y_t) | z_t)`, always `<= 0`.
pub fn leakage_pointwise_iid(hnet: &HNetFeedforward, y: f64, z: f64, disc: &Discretizer) -> Result<f64, PrivacyError> {
    hnet.log_prob(y, z, disc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(seed: u64, bins: usize) -> HNetFeedforward {
        HNetFeedforward::new(bins, 64, 0.001, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn zeroed_head_is_uniform() {
        let mut h = net(0, 32);
        h.zero_head();
        let d = Discretizer::new(32, 0.0, 4.0).unwrap();
        let (loss, _) = h.loss_and_grads(&[StepPair { y: 1.3, z: 0.2 }, StepPair { y: 3.9, z: 2.0 }], &d).unwrap();
        assert!((loss - 32f64.ln()).abs() < 1e-12);
        let f = leakage_pointwise_iid(&h, 0.7, 1.0, &d).unwrap();
        assert!((f + 32f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_prediction_gives_small_leakage_magnitude() {
        let mut h = HNetFeedforward::new(2, 4, 0.001, &mut ChaCha8Rng::seed_from_u64(1));
        h.zero_head();
        // logit gap ln 99 gives probability 0.99 on bin 1
        h.net.layers_mut().last_mut().unwrap().bias[1] = 99f64.ln();
        let d = Discretizer::new(2, 0.0, 2.0).unwrap();
        let f = leakage_pointwise_iid(&h, 1.5, 0.3, &d).unwrap();
        assert!((f - 0.99f64.ln()).abs() < 1e-12);
        assert!((f + 0.01005).abs() < 1e-5);
        h.net.layers_mut().last_mut().unwrap().bias[1] = 999f64.ln();
        assert!(leakage_pointwise_iid(&h, 1.5, 0.3, &d).unwrap() > f);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = HNetFeedforward::new(5, 8, 0.001, &mut ChaCha8Rng::seed_from_u64(2));
        let d = Discretizer::new(5, 0.0, 2.0).unwrap();
        let batch = [StepPair { y: 0.3, z: 0.9 }, StepPair { y: 1.7, z: 0.1 }, StepPair { y: 1.1, z: 1.4 }];
        let (_, grads) = h.loss_and_grads(&batch, &d).unwrap();
        let err = grad_check(&h.net, &grads, |p| {
            let probe = HNetFeedforward { net: p.clone(), optimizer: h.optimizer.clone() };
            probe.loss_and_grads(&batch, &d).unwrap().0
        });
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn learns_deterministic_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut h = HNetFeedforward::new(8, 64, 0.001, &mut rng);
        let d = Discretizer::new(8, 0.0, 4.0).unwrap();
        let mut buf = RingBuffer::new(10_000);
        for _ in 0..5000 {
            let k = rng.random_range(0..8usize);
            let y = 0.25 + 0.5 * k as f64;
            buf.push(StepPair { y, z: 4.0 - y });
        }
        let mut last = f64::INFINITY;
        for _ in 0..60 {
            last = h.refresh(&buf, &d, 128, 25, &mut rng).unwrap().unwrap();
        }
        assert!(last < 0.1, "{last}");
    }

    #[test]
    fn refresh_on_empty_buffer_is_a_no_op() {
        let mut h = net(4, 4);
        let before = h.clone();
        let d = Discretizer::new(4, 0.0, 1.0).unwrap();
        let buf = RingBuffer::new(10);
        assert_eq!(h.refresh(&buf, &d, 8, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap(), None);
        assert_eq!(h, before);
    }
}
