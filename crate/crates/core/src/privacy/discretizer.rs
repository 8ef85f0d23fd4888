use serde::{Deserialize, Serialize};

use super::PrivacyError;

/// Uniform bins over `[y_lo, y_hi)`; out-of-range values go to the end bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    n_bins: usize,
    y_lo: f64,
    y_hi: f64,
}

impl Discretizer {
    pub fn new(n_bins: usize, y_lo: f64, y_hi: f64) -> Result<Self, PrivacyError> {
        if n_bins < 2 {
            return Err(PrivacyError::InvalidConfig("need at least 2 bins".into()));
        }
        if !(y_lo.is_finite() && y_hi.is_finite() && y_hi > y_lo) {
            return Err(PrivacyError::InvalidConfig(format!("bin range [{y_lo}, {y_hi}) is empty")));
        }
        Ok(Self { n_bins, y_lo, y_hi })
    }

    /// Range `[0, max demand]` of the given episodes.
    pub fn fit<'a>(n_bins: usize, demand: impl IntoIterator<Item = &'a [f64]>) -> Result<Self, PrivacyError> {
        let hi = demand.into_iter().flatten().fold(0.0f64, |m, &y| m.max(y));
        Self::new(n_bins, 0.0, hi)
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn y_lo(&self) -> f64 {
        self.y_lo
    }

    pub fn y_hi(&self) -> f64 {
        self.y_hi
    }

    pub fn edges(&self) -> Vec<f64> {
        let w = (self.y_hi - self.y_lo) / self.n_bins as f64;
        (0..=self.n_bins).map(|i| self.y_lo + i as f64 * w).collect()
    }

    pub fn bin(&self, y: f64) -> usize {
        let u = (y - self.y_lo) / (self.y_hi - self.y_lo) * self.n_bins as f64;
        if u.is_nan() || u < 0.0 {
            0
        } else {
            (u as usize).min(self.n_bins - 1)
        }
    }

    /// Maps a load onto roughly `[0, 1]` for network inputs.
    pub fn scale(&self, y: f64) -> f64 {
        (y - self.y_lo) / (self.y_hi - self.y_lo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binning() {
        let d = Discretizer::new(4, 0.0, 2.0).unwrap();
        assert_eq!(d.edges(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(d.bin(-1.0), 0);
        assert_eq!(d.bin(0.49), 0);
        assert_eq!(d.bin(0.5), 1);
        assert_eq!(d.bin(1.99), 3);
        assert_eq!(d.bin(2.0), 3);
        assert_eq!(d.bin(50.0), 3);
    }

    #[test]
    fn fit_uses_training_maximum() {
        let a = [0.1, 3.2];
        let b = [0.5];
        let d = Discretizer::fit(32, [&a[..], &b[..]]).unwrap();
        assert_eq!(d.y_hi(), 3.2);
        assert!(d.edges().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn degenerate_ranges_are_rejected() {
        assert!(Discretizer::new(1, 0.0, 1.0).is_err());
        assert!(Discretizer::new(4, 1.0, 1.0).is_err());
        assert!(Discretizer::fit(4, [&[0.0][..]]).is_err());
    }
}
