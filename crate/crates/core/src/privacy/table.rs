use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Discretizer, EpisodePair, HNetRecurrent, PrivacyError};
use crate::buffer::RingBuffer;

/// Buffer-averaged per-step leakage, `f_hat[t] <= 0` in nats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyTable {
    pub f_hat: Vec<f64>,
    /// Global step at which the table was computed.
    pub refreshed_at: u64,
}

impl PrivacyTable {
    /// Table used before any episode has been stored.
    pub fn uniform(horizon: usize, n_bins: usize) -> Self {
        Self {
            f_hat: vec![-(n_bins as f64).ln(); horizon],
            refreshed_at: 0,
        }
    }

    pub fn at(&self, t: usize) -> f64 {
        self.f_hat[t]
    }
}

/// `f_hat[t]` = mean over up to `n_samples` buffered episodes of
/// `ln P(bin(y_t) | y^{t-1}, z^T)`.
pub fn leakage_table_general<R: Rng + ?Sized>(
    hnet: &HNetRecurrent,
    buffer: &RingBuffer<EpisodePair>,
    disc: &Discretizer,
    n_samples: usize,
    refreshed_at: u64,
    rng: &mut R,
) -> Result<PrivacyTable, PrivacyError> {
    if buffer.is_empty() {
        return Err(PrivacyError::EmptyBuffer);
    }
    let sample = buffer.sample(n_samples.max(1), rng);
    let horizon = sample[0].y.len();
    let mut f_hat = vec![0.0; horizon];
    for ep in &sample {
        let lp = hnet.log_probs(&ep.y, &ep.z, disc)?;
        if lp.len() != horizon {
            return Err(PrivacyError::EpisodeShape);
        }
        f_hat.iter_mut().zip(lp).for_each(|(f, v)| *f += v);
    }
    let inv = 1.0 / sample.len() as f64;
    f_hat.iter_mut().for_each(|f| *f = (*f * inv).min(0.0));
    Ok(PrivacyTable { f_hat, refreshed_at })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_net_gives_minus_ln_bins_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut h = HNetRecurrent::new(32, 4, 1, 0.001, &mut rng);
        h.zero_head();
        let d = Discretizer::new(32, 0.0, 3.0).unwrap();
        let mut buf = RingBuffer::new(500);
        for _ in 0..5 {
            let y: Vec<f64> = (0..96).map(|_| rng.random_range(0.0..3.0)).collect();
            buf.push(EpisodePair { z: y.clone(), y });
        }
        let table = leakage_table_general(&h, &buf, &d, 64, 7, &mut rng).unwrap();
        assert_eq!(table.f_hat.len(), 96);
        assert_eq!(table.refreshed_at, 7);
        assert!(table.f_hat.iter().all(|f| (f + 32f64.ln()).abs() < 1e-12));
    }

    #[test]
    fn confident_net_approaches_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut h = HNetRecurrent::new(4, 4, 1, 0.001, &mut rng);
        h.zero_head();
        h.params.head.layers_mut()[0].bias[2] = 40.0;
        let d = Discretizer::new(4, 0.0, 4.0).unwrap();
        let mut buf = RingBuffer::new(10);
        buf.push(EpisodePair { y: vec![2.5; 96], z: vec![1.0; 96] });
        let table = leakage_table_general(&h, &buf, &d, 64, 0, &mut rng).unwrap();
        assert!(table.f_hat.iter().all(|&f| f <= 0.0 && f > -1e-12));
    }

    #[test]
    fn empty_buffer_errors() {
        let h = HNetRecurrent::new(4, 2, 1, 0.001, &mut ChaCha8Rng::seed_from_u64(0));
        let d = Discretizer::new(4, 0.0, 1.0).unwrap();
        let buf = RingBuffer::new(3);
        assert_eq!(
            leakage_table_general(&h, &buf, &d, 8, 0, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(PrivacyError::EmptyBuffer)
        );
    }
}
