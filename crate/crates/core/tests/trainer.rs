use pcmu::agent::{TrainConfig, Trainer};
use pcmu::data::{generate_synthetic, Checkpoint, SynthGenConfig};
use pcmu::env::{BatteryConfig, EnvConfig, Environment, LoadEpisode, TariffSchedule};
use pcmu::privacy::{PrivacyBackend, PrivacyConfig};

fn episodes(n: usize) -> Vec<LoadEpisode> {
    generate_synthetic(&SynthGenConfig { n_episodes: n, seed: 21, ..SynthGenConfig::default() }).unwrap()
}

fn env() -> Environment {
    Environment::new(EnvConfig::default(), BatteryConfig::default(), TariffSchedule::default()).unwrap()
}

fn small_privacy() -> PrivacyConfig {
    PrivacyConfig {
        rnn_hidden: 6,
        rnn_batch: 4,
        refresh_minibatches: 2,
        ff_hidden: 16,
        ..PrivacyConfig::default()
    }
}

fn trainer(backend: PrivacyBackend, lambda: f64, episodes_total: usize) -> Trainer {
    let config = TrainConfig { episodes: episodes_total, lambda, seed: 3, copy_every: 100, ..TrainConfig::default() };
    Trainer::new(env(), episodes(12), backend, config, small_privacy()).unwrap()
}

#[test]
fn training_is_deterministic_for_every_backend() {
    for backend in PrivacyBackend::ALL {
        let mut a = trainer(backend, 0.5, 4);
        let mut b = trainer(backend, 0.5, 4);
        a.train().unwrap();
        b.train().unwrap();
        assert_eq!(a.log(), b.log(), "{backend}");
        assert_eq!(a.qnet(), b.qnet(), "{backend}");
        assert_eq!(a.to_checkpoint().to_bytes(), b.to_checkpoint().to_bytes(), "{backend}");
    }
}

#[test]
fn resuming_from_a_checkpoint_matches_an_uninterrupted_run() {
    for backend in PrivacyBackend::ALL {
        let mut straight = trainer(backend, 0.5, 6);
        straight.train().unwrap();

        let mut first = trainer(backend, 0.5, 6);
        for _ in 0..3 {
            first.run_episode().unwrap();
        }
        let bytes = first.to_checkpoint().to_bytes();
        let ck = Checkpoint::from_bytes(&bytes).unwrap();
        let config = first.config().clone();
        let mut resumed = Trainer::from_checkpoint(&ck, env(), episodes(12), backend, config, small_privacy()).unwrap();
        assert_eq!(resumed.episodes_done(), 3);
        resumed.train().unwrap();

        assert_eq!(resumed.log(), straight.log(), "{backend}");
        assert_eq!(resumed.to_checkpoint().to_bytes(), straight.to_checkpoint().to_bytes(), "{backend}");
    }
}

#[test]
fn pure_cost_weight_learns_to_leave_the_battery_idle() {
    let data = episodes(12);
    let mut tr = trainer(PrivacyBackend::Flatness, 1.0, 120);
    tr.train().unwrap();
    let early = tr.log()[0].cost_signal;
    let trajs = tr.evaluate(&data).unwrap();
    let greedy = trajs.iter().map(|t| t.cost_signal.iter().sum::<f64>()).sum::<f64>() / trajs.len() as f64;
    assert!(early > 0.5, "exploration should move the battery: {early}");
    assert!(greedy < 0.05 * early, "greedy cost signal {greedy} vs exploring {early}");
}

#[test]
fn evaluated_trajectories_are_physically_feasible() {
    let data = episodes(40);
    let mut tr = trainer(PrivacyBackend::Flatness, 0.0, 10);
    tr.train().unwrap();
    for t in tr.evaluate(&data).unwrap() {
        assert!(t.levels.iter().all(|l| (-1e-9..=1.0 + 1e-9).contains(l)));
        assert!(t.grid_kw.iter().all(|&z| z >= -1e-9));
        for i in 0..t.grid_kw.len() {
            assert!((t.grid_kw[i] - t.demand_kw[i] - t.rate_kw[i]).abs() < 1e-12);
        }
    }
}
