use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MiError;

/// Upper bound on `|Y|^T * |Z|^T` for exact enumeration.
pub const MAX_ENUMERATION: u128 = 1 << 22;

const SUM_TOLERANCE: f64 = 1e-9;

/// Joint probability table `p[x][y]` over small finite alphabets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJoint {
    p: Vec<Vec<f64>>,
}

impl DiscreteJoint {
    pub fn new(p: Vec<Vec<f64>>) -> Result<Self, MiError> {
        let cols = p.first().map_or(0, Vec::len);
        if p.is_empty() || cols == 0 || p.iter().any(|r| r.len() != cols) {
            return Err(MiError::InvalidJoint("table must be a non-empty rectangle".into()));
        }
        if p.iter().flatten().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(MiError::InvalidJoint("entries must be finite and non-negative".into()));
        }
        let total: f64 = p.iter().flatten().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(MiError::InvalidJoint(format!("entries sum to {total}")));
        }
        Ok(Self { p })
    }

    /// Product of two marginals.
    pub fn product(px: &[f64], py: &[f64]) -> Result<Self, MiError> {
        Self::new(px.iter().map(|a| py.iter().map(|b| a * b).collect()).collect())
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.p
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        self.p.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        (0..self.p[0].len()).map(|j| self.p.iter().map(|r| r[j]).sum()).collect()
    }

    /// Draws `n` index pairs.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<(usize, usize)> {
        let cells: Vec<(usize, usize, f64)> = self
            .p
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, &v)| (i, j, v)))
            .collect();
        (0..n)
            .map(|_| {
                let mut u = rng.random::<f64>();
                for &(i, j, v) in &cells {
                    if u < v {
                        return (i, j);
                    }
                    u -= v;
                }
                let &(i, j, _) = cells.iter().rev().find(|c| c.2 > 0.0).unwrap();
                (i, j)
            })
            .collect()
    }
}

/// `sum p(x,y) ln[p(x,y) / (p(x) p(y))]` with `0 ln 0 = 0`, in nats.
pub fn exact_discrete_mi(joint: &DiscreteJoint) -> f64 {
    let px = joint.marginal_x();
    let py = joint.marginal_y();
    let mut mi = 0.0;
    for (i, row) in joint.p.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > 0.0 {
                mi += v * (v / (px[i] * py[j])).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Markov source `Y` observed through a memoryless channel `p(z | y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovChainSpec {
    pub initial: Vec<f64>,
    /// `transition[a][b] = P(Y_{t+1} = b | Y_t = a)`.
    pub transition: Vec<Vec<f64>>,
    /// `channel[y][z] = P(Z_t = z | Y_t = y)`.
    pub channel: Vec<Vec<f64>>,
    pub horizon: usize,
}

impl MarkovChainSpec {
    /// Source with identical independent marginals at every step.
    pub fn iid(marginal: Vec<f64>, channel: Vec<Vec<f64>>, horizon: usize) -> Self {
        let transition = vec![marginal.clone(); marginal.len()];
        Self {
            initial: marginal,
            transition,
            channel,
            horizon,
        }
    }

    fn validate(&self) -> Result<(), MiError> {
        let ny = self.initial.len();
        let stochastic = |r: &Vec<f64>| r.iter().all(|&v| v >= 0.0) && (r.iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE;
        if ny == 0 || self.horizon == 0 {
            return Err(MiError::InvalidJoint("empty alphabet or zero horizon".into()));
        }
        if !stochastic(&self.initial) {
            return Err(MiError::InvalidJoint("initial distribution is not stochastic".into()));
        }
        if self.transition.len() != ny || self.transition.iter().any(|r| r.len() != ny || !stochastic(r)) {
            return Err(MiError::InvalidJoint("transition matrix is not square stochastic".into()));
        }
        let nz = self.channel.first().map_or(0, Vec::len);
        if nz == 0 || self.channel.len() != ny || self.channel.iter().any(|r| r.len() != nz || !stochastic(r)) {
            return Err(MiError::InvalidJoint("channel rows are not stochastic".into()));
        }
        Ok(())
    }
}

fn digits(mut code: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for d in out.iter_mut().rev() {
        *d = code % base;
        code /= base;
    }
    out
}

/// Exact `(I(Y^T; Z^T), (1/T) sum_t I(Y_t; Z_t))` by enumerating every pair
/// of sequences.
pub fn iid_lower_bound_check(spec: &MarkovChainSpec) -> Result<(f64, f64), MiError> {
    spec.validate()?;
    let (ny, nz, t_len) = (spec.initial.len(), spec.channel[0].len(), spec.horizon);
    let size = (ny as u128).checked_pow(t_len as u32).zip((nz as u128).checked_pow(t_len as u32));
    let (n_yseq, n_zseq) = match size {
        Some((a, b)) if a.saturating_mul(b) <= MAX_ENUMERATION => (a as usize, b as usize),
        Some((a, b)) => return Err(MiError::AlphabetTooLarge(a.saturating_mul(b))),
        None => return Err(MiError::AlphabetTooLarge(u128::MAX)),
    };
    let mut joint = vec![vec![0.0; n_zseq]; n_yseq];
    let mut per_step = vec![vec![vec![0.0; nz]; ny]; t_len];
    let z_digits: Vec<Vec<usize>> = (0..n_zseq).map(|c| digits(c, nz, t_len)).collect();
    for (yc, row) in joint.iter_mut().enumerate() {
        let ys = digits(yc, ny, t_len);
        let mut py = spec.initial[ys[0]];
        for w in ys.windows(2) {
            py *= spec.transition[w[0]][w[1]];
        }
        if py == 0.0 {
            continue;
        }
        for (zc, zs) in z_digits.iter().enumerate() {
            let p = ys.iter().zip(zs).fold(py, |acc, (&y, &z)| acc * spec.channel[y][z]);
            row[zc] = p;
            for (t, (&y, &z)) in ys.iter().zip(zs).enumerate() {
                per_step[t][y][z] += p;
            }
        }
    }
    let joint_mi = exact_discrete_mi(&DiscreteJoint::new(joint)?);
    let mut total = 0.0;
    for table in per_step {
        total += exact_discrete_mi(&DiscreteJoint::new(table)?);
    }
    Ok((joint_mi, total / t_len as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bsc(flip: f64) -> Vec<Vec<f64>> {
        vec![vec![1.0 - flip, flip], vec![flip, 1.0 - flip]]
    }

    #[test]
    fn product_joint_has_zero_mi() {
        let j = DiscreteJoint::product(&[0.2, 0.3, 0.5], &[0.6, 0.4]).unwrap();
        assert!(exact_discrete_mi(&j).abs() < 1e-15);
    }

    #[test]
    fn identity_over_four_symbols() {
        let p = (0..4).map(|i| (0..4).map(|j| if i == j { 0.25 } else { 0.0 }).collect()).collect();
        let mi = exact_discrete_mi(&DiscreteJoint::new(p).unwrap());
        assert!((mi - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn binary_symmetric_channel() {
        let p = bsc(0.1).into_iter().map(|r| r.into_iter().map(|v| 0.5 * v).collect()).collect();
        let mi = exact_discrete_mi(&DiscreteJoint::new(p).unwrap());
        let hb = -(0.1f64 * 0.1f64.ln() + 0.9 * 0.9f64.ln());
        assert!((mi - (2f64.ln() - hb)).abs() < 1e-12);
        assert!((mi - 0.3681).abs() < 1e-4);
    }

    #[test]
    fn invalid_joints_are_rejected() {
        assert!(DiscreteJoint::new(vec![vec![0.5, 0.6]]).is_err());
        assert!(DiscreteJoint::new(vec![vec![1.5, -0.5]]).is_err());
        assert!(DiscreteJoint::new(vec![vec![0.5], vec![0.25, 0.25]]).is_err());
        assert!(DiscreteJoint::new(vec![]).is_err());
    }

    #[test]
    fn iid_source_factorizes() {
        let spec = MarkovChainSpec::iid(vec![0.3, 0.7], bsc(0.2), 3);
        let (joint, avg) = iid_lower_bound_check(&spec).unwrap();
        assert!((joint / 3.0 - avg).abs() < 1e-12, "{joint} vs {avg}");
        assert!(joint >= avg);
    }

    #[test]
    fn persistent_chain_exceeds_average() {
        let spec = MarkovChainSpec {
            initial: vec![0.5, 0.5],
            transition: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            channel: bsc(0.1),
            horizon: 3,
        };
        let (joint, avg) = iid_lower_bound_check(&spec).unwrap();
        assert!(joint > avg + 1e-3, "{joint} vs {avg}");
    }

    #[test]
    fn constant_source_has_no_information() {
        let spec = MarkovChainSpec {
            initial: vec![1.0, 0.0],
            transition: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            channel: bsc(0.1),
            horizon: 3,
        };
        let (joint, avg) = iid_lower_bound_check(&spec).unwrap();
        assert!(joint.abs() < 1e-12 && avg.abs() < 1e-12);
    }

    #[test]
    fn enumeration_limit() {
        let spec = MarkovChainSpec::iid(vec![0.25; 4], vec![vec![0.25; 4]; 4], 12);
        assert!(matches!(iid_lower_bound_check(&spec), Err(MiError::AlphabetTooLarge(_))));
    }

    fn stochastic(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bound_holds_on_random_chains(
            init in stochastic(2),
            t0 in stochastic(2),
            t1 in stochastic(2),
            c0 in stochastic(3),
            c1 in stochastic(3),
            horizon in 1usize..=4,
        ) {
            let spec = MarkovChainSpec { initial: init, transition: vec![t0, t1], channel: vec![c0, c1], horizon };
            let (joint, avg) = iid_lower_bound_check(&spec).unwrap();
            prop_assert!(joint >= avg - 1e-12);
        }

        #[test]
        fn factorized_joints_have_zero_mi(px in stochastic(3), py in stochastic(4)) {
            let j = DiscreteJoint::product(&px, &py).unwrap();
            prop_assert!(exact_discrete_mi(&j) < 1e-12);
        }

        #[test]
        fn mi_is_non_negative(p in stochastic(6)) {
            let j = DiscreteJoint::new(vec![p[..3].to_vec(), p[3..].to_vec()]).unwrap();
            prop_assert!(exact_discrete_mi(&j) >= 0.0);
        }
    }
}
