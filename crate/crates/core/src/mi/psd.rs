use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::MiError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsdConfig {
    pub segment_len: usize,
    /// Samples shared by consecutive segments.
    pub overlap: usize,
    /// Samples per unit time; frequencies are reported in cycles per unit.
    pub sample_rate: f64,
    /// Subtract each segment's mean before windowing.
    pub detrend: bool,
}

impl Default for PsdConfig {
    fn default() -> Self {
        Self {
            segment_len: 32,
            overlap: 16,
            sample_rate: 1.0,
            detrend: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
}

impl Spectrum {
    pub fn bin_width(&self) -> f64 {
        self.frequencies.get(1).copied().unwrap_or(0.0)
    }

    /// Rectangle-rule integral of the one-sided density.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.bin_width()
    }
}

fn hann(n: usize) -> Vec<f64> {
    // periodic Hann, the usual choice for spectral averaging
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Welch estimate: Hann-windowed, overlapping segments, averaged one-sided
/// periodograms scaled as a density so that white noise sits at
/// `2 variance / sample_rate`.
pub fn welch_psd(signal: &[f64], config: &PsdConfig) -> Result<Spectrum, MiError> {
    let m = config.segment_len;
    if m < 2 || config.overlap >= m || !(config.sample_rate > 0.0) {
        return Err(MiError::InvalidConfig("need segment_len >= 2, overlap < segment_len, sample_rate > 0".into()));
    }
    if signal.len() < m {
        return Err(MiError::SignalTooShort {
            len: signal.len(),
            segment: m,
        });
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(MiError::NonFinite);
    }
    let window = hann(m);
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
    let n_freq = m / 2 + 1;
    let step = m - config.overlap;
    let mut power = vec![0.0; n_freq];
    let mut buf = vec![Complex::new(0.0, 0.0); m];
    let mut segments = 0usize;
    let mut start = 0;
    while start + m <= signal.len() {
        let seg = &signal[start..start + m];
        let mean = if config.detrend { seg.iter().sum::<f64>() / m as f64 } else { 0.0 };
        for ((b, &v), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new((v - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p += c.norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let scale = 1.0 / (config.sample_rate * window_power * segments as f64);
    for (i, p) in power.iter_mut().enumerate() {
        *p *= scale;
        let nyquist = m.is_multiple_of(2) && i == m / 2;
        if i != 0 && !nyquist {
            *p *= 2.0;
        }
    }
    let df = config.sample_rate / m as f64;
    Ok(Spectrum {
        frequencies: (0..n_freq).map(|i| i as f64 * df).collect(),
        power,
    })
}
