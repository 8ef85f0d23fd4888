use pcmu::agent::{ddql_on_mdp, tabular_cql, value_iteration, CqlConfig, DdqlOracleConfig, SmallMdp};

const REWARDS: [f64; 8] = [0.0, 0.2, 0.0, 1.0, 0.0, -0.5, 0.3, 0.0];
const MOVE_COST: f64 = 0.05;

/// Eight states on a ring. Action 0 stays, 1 steps clockwise and 2 steps
/// counter-clockwise.
fn ring() -> SmallMdp {
    let n = REWARDS.len();
    SmallMdp {
        transitions: (0..n).map(|s| vec![vec![(s, 1.0)], vec![((s + 1) % n, 1.0)], vec![((s + n - 1) % n, 1.0)]]).collect(),
        rewards: REWARDS.iter().map(|&r| vec![r, r - MOVE_COST, r - MOVE_COST]).collect(),
        gamma: 0.9,
    }
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn ring_optimum_parks_on_the_best_state() {
    let q = value_iteration(&ring(), 1e-12).unwrap();
    // staying forever on the reward-1 state
    assert!((q[3][0] - 10.0).abs() < 1e-9);
    let greedy = |s: usize| (0..3).max_by(|&a, &b| q[s][a].total_cmp(&q[s][b])).unwrap();
    assert_eq!(greedy(3), 0);
    assert_eq!(greedy(2), 1);
    assert_eq!(greedy(4), 2);
}

#[test]
fn tabular_q_learning_reaches_the_optimum() {
    let mdp = ring();
    let q_star = value_iteration(&mdp, 1e-12).unwrap();
    let config = CqlConfig {
        updates: 200_000,
        alpha: 0.5,
        visit_decay: None,
        seed: 5,
    };
    let q = tabular_cql(&mdp, &config).unwrap();
    let err = max_abs_diff(&q, &q_star);
    assert!(err < 1e-3, "{err}");
}

#[test]
fn double_q_learning_reaches_the_optimum() {
    let mdp = ring();
    let q_star = value_iteration(&mdp, 1e-12).unwrap();
    let q = ddql_on_mdp(&mdp, &DdqlOracleConfig::default()).unwrap();
    let err = max_abs_diff(&q, &q_star);
    assert!(err < 0.05, "{err}: {q:?}");
}
