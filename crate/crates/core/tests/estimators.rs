use pcmu::buffer::RingBuffer;
use pcmu::mi::{exact_discrete_mi, iid_lower_bound_check, ksg_mi, DiscreteJoint, KsgConfig, MarkovChainSpec};
use pcmu::privacy::{Discretizer, HNetFeedforward, StepPair};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn discrete_estimate(joint: &DiscreteJoint, n: usize, seed: u64) -> f64 {
    // the jitter stream must not reuse the sampling stream
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x, y): (Vec<Vec<f64>>, Vec<Vec<f64>>) = joint.sample(n, &mut rng).into_iter().map(|(i, j)| (vec![i as f64], vec![j as f64])).unzip();
    ksg_mi(&x, &y, &KsgConfig { seed: seed + 100, ..KsgConfig::default() }).unwrap()
}

#[test]
fn ksg_on_jittered_discrete_samples_matches_exact_mi() {
    let joints = [
        vec![vec![0.3, 0.05, 0.0], vec![0.05, 0.2, 0.05], vec![0.0, 0.05, 0.3]],
        vec![vec![0.25, 0.25], vec![0.25, 0.25]],
        vec![vec![0.4, 0.1], vec![0.1, 0.4]],
        vec![vec![0.25, 0.0, 0.0, 0.0], vec![0.0, 0.25, 0.0, 0.0], vec![0.0, 0.0, 0.25, 0.0], vec![0.0, 0.0, 0.0, 0.25]],
    ];
    for (seed, table) in joints.into_iter().enumerate() {
        let joint = DiscreteJoint::new(table).unwrap();
        let exact = exact_discrete_mi(&joint);
        let est = discrete_estimate(&joint, 5000, seed as u64);
        assert!((est - exact).abs() < 0.1, "joint {seed}: estimate {est}, exact {exact}");
    }
}


#[test]
fn joint_information_dominates_per_step_average() {
    let channel = vec![vec![0.9, 0.1], vec![0.2, 0.8]];
    let sticky = MarkovChainSpec {
        initial: vec![0.5, 0.5],
        transition: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
        channel: channel.clone(),
        horizon: 3,
    };
    let (joint, avg) = iid_lower_bound_check(&sticky).unwrap();
    assert!(joint > avg + 1e-3, "{joint} vs {avg}");

    let (joint, avg) = iid_lower_bound_check(&MarkovChainSpec::iid(vec![0.3, 0.7], channel, 3)).unwrap();
    // independent steps: the joint is the sum, so it is T times the average
    assert!((joint - 3.0 * avg).abs() < 1e-12, "{joint} vs {avg}");
}

/// `z` picks one of four pairs of demand bins and `y` is uniform within the
/// pair, so the conditional entropy of the binned demand given `z` is ln 2.
#[test]
fn feedforward_hnet_recovers_known_conditional_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let disc = Discretizer::new(8, 0.0, 4.0).unwrap();
    let draw = |rng: &mut ChaCha8Rng| {
        let pair = rng.random_range(0..4usize);
        let bin = 2 * pair + rng.random_range(0..2usize);
        StepPair { y: 0.25 + 0.5 * bin as f64, z: 0.5 + pair as f64 }
    };
    let mut buffer = RingBuffer::new(20_000);
    for _ in 0..20_000 {
        buffer.push(draw(&mut rng));
    }
    let mut hnet = HNetFeedforward::new(8, 32, 0.001, &mut rng);
    for _ in 0..40 {
        hnet.refresh(&buffer, &disc, 128, 25, &mut rng).unwrap();
    }
    let held_out: Vec<StepPair> = (0..5000).map(|_| draw(&mut rng)).collect();
    let (loss, _) = hnet.loss_and_grads(&held_out, &disc).unwrap();
    assert!((loss - std::f64::consts::LN_2).abs() < 0.05, "{loss}");
}
