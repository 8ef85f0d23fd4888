use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, LoadEpisode};

/// 70:10:20 train/validation/test partition.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LoadEpisode>,
    pub val: Vec<LoadEpisode>,
    pub test: Vec<LoadEpisode>,
    pub seed: u64,
}

pub const MIN_SPLIT_EPISODES: usize = 10;

/// Split sizes for `n` episodes: rounded 70% and 10%, the rest for testing.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = (n as f64 * 0.7).round() as usize;
    let val = (n as f64 * 0.1).round() as usize;
    (train, val, n - train - val)
}

/// Seeded shuffle followed by a contiguous 70:10:20 cut.
pub fn split_dataset(episodes: &[LoadEpisode], seed: u64) -> Result<DatasetSplit, DataError> {
    if episodes.len() < MIN_SPLIT_EPISODES {
        return Err(DataError::TooFewEpisodes {
            needed: MIN_SPLIT_EPISODES,
            got: episodes.len(),
        });
    }
    let mut order: Vec<usize> = (0..episodes.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (n_train, n_val, _) = split_sizes(episodes.len());
    let pick = |idx: &[usize]| idx.iter().map(|&i| episodes[i].clone()).collect::<Vec<_>>();
    Ok(DatasetSplit {
        train: pick(&order[..n_train]),
        val: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn episodes(n: usize) -> Vec<LoadEpisode> {
        (0..n)
            .map(|i| LoadEpisode {
                demand_kw: vec![i as f64],
                occupancy: None,
                label: format!("e{i}"),
            })
            .collect()
    }

    #[test]
    fn paper_sized_split() {
        assert_eq!(split_sizes(2700), (1890, 270, 540));
        let s = split_dataset(&episodes(2700), 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (1890, 270, 540));
    }

    #[test]
    fn ten_episodes() {
        let s = split_dataset(&episodes(10), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7, 1, 2));
    }

    #[test]
    fn too_few_is_an_error() {
        assert!(matches!(split_dataset(&episodes(9), 0), Err(DataError::TooFewEpisodes { got: 9, .. })));
    }

    #[test]
    fn same_seed_same_split() {
        let e = episodes(57);
        assert_eq!(split_dataset(&e, 42).unwrap(), split_dataset(&e, 42).unwrap());
        assert_ne!(split_dataset(&e, 42).unwrap().train, split_dataset(&e, 43).unwrap().train);
    }

    proptest! {
        #[test]
        fn partitions_are_disjoint_and_exhaustive(n in 10usize..400, seed in any::<u64>()) {
            let e = episodes(n);
            let s = split_dataset(&e, seed).unwrap();
            let mut labels: Vec<String> = s.train.iter().chain(&s.val).chain(&s.test).map(|x| x.label.clone()).collect();
            labels.sort();
            let mut all: Vec<String> = e.iter().map(|x| x.label.clone()).collect();
            all.sort();
            prop_assert_eq!(labels, all);
            let exact = n as f64;
            prop_assert!((s.train.len() as f64 - 0.7 * exact).abs() <= 1.0);
            prop_assert!((s.val.len() as f64 - 0.1 * exact).abs() <= 1.0);
            prop_assert!((s.test.len() as f64 - 0.2 * exact).abs() <= 1.0);
        }
    }
}
