use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MiError;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KsgConfig {
    pub k_neighbors: usize,
    /// Half-width of the uniform tie-breaking noise added to every coordinate.
    pub jitter_amplitude: f64,
    /// Replace each coordinate by its mid-rank, scaled to [0, 1], before
    /// jittering. This makes the estimate invariant to strictly monotone
    /// per-coordinate maps.
    pub rank_transform: bool,
    pub seed: u64,
}

impl Default for KsgConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 4,
            jitter_amplitude: 1e-10,
            rank_transform: true,
            seed: 0,
        }
    }
}

/// `psi(n)` for positive integers: `-gamma + sum_{j<n} 1/j`.
pub fn digamma_int(n: usize) -> f64 {
    assert!(n >= 1, "digamma is undefined at 0");
    -EULER_GAMMA + (1..n).map(|j| 1.0 / j as f64).sum::<f64>()
}

fn digamma_table(n: usize) -> Vec<f64> {
    let mut table = vec![f64::NAN; n + 1];
    if n >= 1 {
        table[1] = -EULER_GAMMA;
    }
    for j in 2..=n {
        table[j] = table[j - 1] + 1.0 / (j - 1) as f64;
    }
    table
}

/// Mid-ranks, with tied values sharing the mean of their positions.
fn mid_ranks(col: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..col.len()).collect();
    idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
    let mut out = vec![0.0; col.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && col[idx[end]] == col[idx[start]] {
            end += 1;
        }
        let rank = (start + end - 1) as f64 / 2.0;
        idx[start..end].iter().for_each(|&i| out[i] = rank);
        start = end;
    }
    out
}

/// Column-major copy, optionally rank-transformed, with jitter applied.
fn prepare(samples: &[Vec<f64>], config: &KsgConfig, rng: &mut ChaCha8Rng, offset: usize) -> Result<Vec<Vec<f64>>, MiError> {
    let n = samples.len();
    let d = samples[0].len();
    if d == 0 || samples.iter().any(|s| s.len() != d) {
        return Err(MiError::DimensionMismatch);
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(MiError::NonFinite);
    }
    let mut cols: Vec<Vec<f64>> = (0..d).map(|c| samples.iter().map(|row| row[c]).collect()).collect();
    if config.rank_transform {
        // ranks scaled to [0, 1] so the jitter stays far above float spacing
        let scale = 1.0 / (n.max(2) - 1) as f64;
        cols = cols.iter().map(|c| mid_ranks(c).into_iter().map(|r| r * scale).collect()).collect();
    }
    for i in 0..n {
        for col in cols.iter_mut() {
            if config.jitter_amplitude > 0.0 {
                col[i] += config.jitter_amplitude * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
    }
    for (c, col) in cols.iter().enumerate() {
        if col.iter().all(|&v| v == col[0]) {
            return Err(MiError::ZeroVariance(offset + c));
        }
    }
    Ok(cols)
}

fn max_dist(cols: &[Vec<f64>], i: usize, j: usize) -> f64 {
    cols.iter().fold(0.0, |m, c| m.max((c[i] - c[j]).abs()))
}

/// KSG estimator 1 with max-norm distances, in nats:
/// `psi(k) + psi(N) - <psi(n_x + 1) + psi(n_y + 1)>`.
///
/// Each argument is `N` rows of equal dimension.
pub fn ksg_mi(x: &[Vec<f64>], y: &[Vec<f64>], config: &KsgConfig) -> Result<f64, MiError> {
    let n = x.len();
    let k = config.k_neighbors;
    if k == 0 {
        return Err(MiError::InvalidConfig("k_neighbors must be at least 1".into()));
    }
    if !(config.jitter_amplitude >= 0.0) {
        return Err(MiError::InvalidConfig("jitter_amplitude must be non-negative".into()));
    }
    if y.len() != n {
        return Err(MiError::DimensionMismatch);
    }
    if n <= k {
        return Err(MiError::TooFewSamples { n, k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let xc = prepare(x, config, &mut rng, 0)?;
    let yc = prepare(y, config, &mut rng, x[0].len())?;
    let psi = digamma_table(n);

    let mut dx = vec![0.0; n];
    let mut dy = vec![0.0; n];
    let mut joint = vec![0.0; n];
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            dx[j] = max_dist(&xc, i, j);
            dy[j] = max_dist(&yc, i, j);
            joint[j] = dx[j].max(dy[j]);
        }
        joint[i] = f64::INFINITY;
        let mut sorted = joint.clone();
        let (_, eps, _) = sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
        let eps = *eps;
        let nx = (0..n).filter(|&j| j != i && dx[j] < eps).count();
        let ny = (0..n).filter(|&j| j != i && dy[j] < eps).count();
        acc += psi[nx + 1] + psi[ny + 1];
    }
    Ok(psi[k] + psi[n] - acc / n as f64)
}

/// Episode-level estimate: one `T`-dimensional sample of demand and one of
/// grid load per episode.
pub fn episode_mi(demand: &[Vec<f64>], grid: &[Vec<f64>], config: &KsgConfig) -> Result<f64, MiError> {
    if demand.is_empty() {
        return Err(MiError::EmptyInput);
    }
    ksg_mi(demand, grid, config)
}

/// Diagnostic only: the mean over steps of the scalar estimate between
/// `y_t` and `z_t` across episodes.
pub fn per_step_mi(demand: &[Vec<f64>], grid: &[Vec<f64>], config: &KsgConfig) -> Result<f64, MiError> {
    if demand.is_empty() {
        return Err(MiError::EmptyInput);
    }
    let horizon = demand[0].len();
    if grid.len() != demand.len() || demand.iter().chain(grid).any(|e| e.len() != horizon) {
        return Err(MiError::DimensionMismatch);
    }
    let mut total = 0.0;
    for t in 0..horizon {
        let xs: Vec<Vec<f64>> = demand.iter().map(|e| vec![e[t]]).collect();
        let ys: Vec<Vec<f64>> = grid.iter().map(|e| vec![e[t]]).collect();
        let cfg = KsgConfig {
            seed: config.seed.wrapping_add(t as u64),
            ..config.clone()
        };
        total += ksg_mi(&xs, &ys, &cfg)?;
    }
    Ok(total / horizon as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_pairs(rho: f64, n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (1.0 - rho * rho).sqrt();
        (0..n)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                (vec![a], vec![rho * a + s * b])
            })
            .unzip()
    }

    #[test]
    fn digamma_matches_known_values() {
        assert!((digamma_int(1) + EULER_GAMMA).abs() < 1e-15);
        assert!((digamma_int(2) - (1.0 - EULER_GAMMA)).abs() < 1e-15);
        // psi(4) = 1 + 1/2 + 1/3 - gamma
        assert!((digamma_int(4) - 1.256_117_668_431_800_5).abs() < 1e-12);
        let table = digamma_table(100);
        assert!((table[100] - digamma_int(100)).abs() < 1e-12);
        // psi(n) ~ ln n - 1/(2n) - 1/(12 n^2)
        let n = 1000.0f64;
        assert!((digamma_int(1000) - (n.ln() - 0.5 / n - 1.0 / (12.0 * n * n))).abs() < 1e-12);
    }

    #[test]
    fn gaussian_rho_09() {
        let (x, y) = gaussian_pairs(0.9, 4000, 11);
        let mi = ksg_mi(&x, &y, &KsgConfig::default()).unwrap();
        let truth = -0.5 * (1.0f64 - 0.81).ln();
        assert!((mi - truth).abs() < 0.08, "estimate {mi}, truth {truth}");
    }

    #[test]
    fn independent_uniforms_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.random()]).collect();
        let y: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.random()]).collect();
        let mi = ksg_mi(&x, &y, &KsgConfig::default()).unwrap();
        assert!(mi.abs() < 0.05, "{mi}");
    }

    #[test]
    fn near_copy_is_large() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<Vec<f64>> = (0..1000).map(|_| vec![rng.random()]).collect();
        let y: Vec<Vec<f64>> = x.iter().map(|v| vec![v[0] + 1e-6 * rng.random::<f64>()]).collect();
        assert!(ksg_mi(&x, &y, &KsgConfig::default()).unwrap() > 2.0);
    }

    #[test]
    fn symmetric_up_to_jitter() {
        let (x, y) = gaussian_pairs(0.6, 1000, 5);
        let a = ksg_mi(&x, &y, &KsgConfig::default()).unwrap();
        let b = ksg_mi(&y, &x, &KsgConfig::default()).unwrap();
        assert!((a - b).abs() < 0.02, "{a} vs {b}");
    }

    #[test]
    fn monotone_maps_leave_estimate_unchanged() {
        let (x, y) = gaussian_pairs(0.7, 2000, 8);
        let base = ksg_mi(&x, &y, &KsgConfig::default()).unwrap();
        let xt: Vec<Vec<f64>> = x.iter().map(|v| vec![v[0].exp()]).collect();
        let yt: Vec<Vec<f64>> = y.iter().map(|v| vec![v[0].powi(3) + 2.0 * v[0]]).collect();
        let moved = ksg_mi(&xt, &yt, &KsgConfig::default()).unwrap();
        assert!((base - moved).abs() < 2e-10, "{base} vs {moved}");
    }

    #[test]
    fn raw_coordinates_also_track_gaussian() {
        let (x, y) = gaussian_pairs(0.9, 4000, 12);
        let cfg = KsgConfig {
            rank_transform: false,
            ..KsgConfig::default()
        };
        let mi = ksg_mi(&x, &y, &cfg).unwrap();
        assert!((mi - 0.8304).abs() < 0.08, "{mi}");
    }

    #[test]
    fn errors() {
        let x = vec![vec![1.0]; 4];
        let cfg = KsgConfig::default();
        assert_eq!(ksg_mi(&x, &x, &cfg), Err(MiError::TooFewSamples { n: 4, k: 4 }));
        let x: Vec<Vec<f64>> = (0..10).map(|_| vec![1.0]).collect();
        let y: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let no_jitter = KsgConfig {
            jitter_amplitude: 0.0,
            ..cfg.clone()
        };
        assert_eq!(ksg_mi(&x, &y, &no_jitter), Err(MiError::ZeroVariance(0)));
        assert_eq!(ksg_mi(&y, &x, &no_jitter), Err(MiError::ZeroVariance(1)));
        assert!(ksg_mi(&x, &y, &cfg).is_ok());
        assert_eq!(ksg_mi(&x, &y[..9], &cfg), Err(MiError::DimensionMismatch));
        let bad = vec![vec![f64::NAN]; 10];
        assert_eq!(ksg_mi(&bad, &y, &cfg), Err(MiError::NonFinite));
    }
}
