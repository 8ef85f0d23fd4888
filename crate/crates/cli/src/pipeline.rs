//! Data loading, training runs, evaluation and the λ sweep shared by the
//! commands and the acceptance harness.

use std::path::Path;

use log::info;
use pcmu::agent::{Trainer, TrainConfig};
use pcmu::attack::{eval_load_attacker, eval_occupancy_attacker, train_load_attacker, train_occupancy_attacker, AttackMetrics, AttackSample};
use pcmu::data::{generate_synthetic, load_csv, resample_to_episodes, split_dataset, Checkpoint, DatasetSplit, LoadEpisode};
use pcmu::env::{Environment, Trajectory};
use pcmu::mi::episode_mi;
use pcmu::privacy::PrivacyBackend;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::io::TradeoffPoint;
use crate::CliError;

/// All episodes named by the `[data]` section.
pub fn load_episodes(cfg: &RunConfig) -> Result<Vec<LoadEpisode>, CliError> {
    match &cfg.data.csv {
        Some(path) => {
            let records = load_csv(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let report = resample_to_episodes(&records, &cfg.env)?;
            if report.dropped_days > 0 {
                info!("{}: dropped {} incomplete days", path.display(), report.dropped_days);
            }
            Ok(report.episodes)
        }
        None => Ok(generate_synthetic(&cfg.data.synthetic)?),
    }
}

pub fn load_split(cfg: &RunConfig) -> Result<DatasetSplit, CliError> {
    Ok(split_dataset(&load_episodes(cfg)?, cfg.data.split_seed)?)
}

/// Seed of one sweep point, stable across platforms and job counts.
pub fn point_seed(master: u64, lambda: f64, backend: PrivacyBackend) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(lambda.to_bits().to_le_bytes());
    h.update(backend.as_str().as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

fn train_config(cfg: &RunConfig, lambda: f64, seed: u64, episodes: Option<usize>) -> TrainConfig {
    TrainConfig {
        lambda,
        seed,
        episodes: episodes.unwrap_or(cfg.train.episodes),
        ..cfg.train.clone()
    }
}

pub fn new_trainer(cfg: &RunConfig, split: &DatasetSplit, backend: PrivacyBackend, lambda: f64, seed: u64, episodes: Option<usize>) -> Result<Trainer, CliError> {
    let config = train_config(cfg, lambda, seed, episodes);
    Ok(Trainer::new(cfg.environment()?, split.train.clone(), backend, config, cfg.privacy.clone())?)
}

/// Trains to completion.
pub fn train(cfg: &RunConfig, split: &DatasetSplit, backend: PrivacyBackend, lambda: f64, seed: u64, episodes: Option<usize>) -> Result<Trainer, CliError> {
    let mut trainer = new_trainer(cfg, split, backend, lambda, seed, episodes)?;
    trainer.train()?;
    Ok(trainer)
}

/// Trainer checkpoint plus the run configuration that produced it.
pub fn run_checkpoint(trainer: &Trainer, cfg: &RunConfig) -> Checkpoint {
    let mut ck = trainer.to_checkpoint();
    let mut echo = cfg.clone();
    echo.train = trainer.config().clone();
    ck.put_text("run/config", echo.to_toml());
    ck
}

/// Rebuilds the configuration and trainer stored by [`run_checkpoint`].
pub fn restore_run(path: &Path) -> Result<(RunConfig, DatasetSplit, Trainer), CliError> {
    let ck = Checkpoint::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let cfg = RunConfig::from_toml(ck.text("run/config")?)?;
    let backend: PrivacyBackend = ck.text("backend")?.parse()?;
    let split = load_split(&cfg)?;
    let trainer = Trainer::from_checkpoint(&ck, cfg.environment()?, split.train.clone(), backend, cfg.train.clone(), cfg.privacy.clone())?;
    Ok((cfg, split, trainer))
}

/// Mean billed cost per episode (one episode is one day).
pub fn cost_per_day(env: &Environment, trajs: &[Trajectory]) -> Result<f64, CliError> {
    if trajs.is_empty() {
        return Err(CliError::Data("no trajectories to bill".into()));
    }
    let mut total = 0.0;
    for t in trajs {
        total += env.billed_cost(&t.grid_kw)?;
    }
    Ok(total / trajs.len() as f64)
}

/// KSG estimate of `I(Y^T; Z^T)` treating each episode as one sample.
pub fn trajectory_mi(cfg: &RunConfig, trajs: &[Trajectory]) -> Result<f64, CliError> {
    let ys: Vec<Vec<f64>> = trajs.iter().map(|t| t.demand_kw.clone()).collect();
    let zs: Vec<Vec<f64>> = trajs.iter().map(|t| t.grid_kw.clone()).collect();
    Ok(episode_mi(&ys, &zs, &cfg.estimators.ksg)?)
}

/// Fits both attackers on `train` and scores them on `test`. The occupancy
/// attacker is skipped when either split lacks labels.
pub fn attack(cfg: &RunConfig, train: &[AttackSample], test: &[AttackSample]) -> Result<AttackMetrics, CliError> {
    let load = train_load_attacker(train, &cfg.attacker.load)?;
    let normalized_error = Some(eval_load_attacker(&load, test)?);
    let labelled = |s: &[AttackSample]| s.iter().all(|x| x.occupancy.is_some());
    let balanced_accuracy = if labelled(train) && labelled(test) {
        let occ = train_occupancy_attacker(train, &cfg.attacker.occupancy)?;
        Some(eval_occupancy_attacker(&occ, test)?)
    } else {
        None
    };
    Ok(AttackMetrics { normalized_error, balanced_accuracy })
}

/// Full evaluation of a trained policy: billed cost and KSG MI on the test
/// split, attackers trained on training-split trajectories.
pub fn evaluate_point(cfg: &RunConfig, split: &DatasetSplit, trainer: &Trainer, with_attackers: bool) -> Result<TradeoffPoint, CliError> {
    let test = trainer.evaluate(&split.test)?;
    let cost_per_day = cost_per_day(trainer.env(), &test)?;
    let ksg_mi_nats = trajectory_mi(cfg, &test)?;
    let metrics = if with_attackers {
        let train = trainer.evaluate(&split.train)?;
        let to_samples = |ts: &[Trajectory]| ts.iter().map(AttackSample::from_trajectory).collect::<Vec<_>>();
        attack(cfg, &to_samples(&train), &to_samples(&test))?
    } else {
        AttackMetrics::default()
    };
    Ok(TradeoffPoint {
        lambda: trainer.config().lambda,
        backend: trainer.backend().as_str().to_string(),
        seed: trainer.config().seed,
        episodes: trainer.episodes_done(),
        cost_per_day,
        ksg_mi_nats,
        load_nmse: metrics.normalized_error,
        occ_balanced_acc: metrics.balanced_accuracy,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub lambdas: Vec<f64>,
    pub backends: Vec<PrivacyBackend>,
    pub master_seed: u64,
    pub episodes: Option<usize>,
    pub jobs: usize,
    pub attackers: bool,
}

/// One independent training run per `(λ, backend)`; rows come back sorted
/// by backend then λ whatever the job count.
pub fn sweep(cfg: &RunConfig, split: &DatasetSplit, spec: &SweepSpec) -> Result<Vec<TradeoffPoint>, CliError> {
    let mut tasks = Vec::new();
    for &backend in &spec.backends {
        for &lambda in &spec.lambdas {
            if !(0.0..=1.0).contains(&lambda) {
                return Err(CliError::Usage(format!("lambda {lambda} outside [0, 1]")));
            }
            tasks.push((backend, lambda));
        }
    }
    let run = |&(backend, lambda): &(PrivacyBackend, f64)| -> Result<TradeoffPoint, CliError> {
        let seed = point_seed(spec.master_seed, lambda, backend);
        let trainer = train(cfg, split, backend, lambda, seed, spec.episodes)?;
        let point = evaluate_point(cfg, split, &trainer, spec.attackers)?;
        info!("{backend} lambda {lambda}: cost {:.4} mi {:.4}", point.cost_per_day, point.ksg_mi_nats);
        Ok(point)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} jobs: {e}", spec.jobs)))?;
    let mut rows = pool.install(|| tasks.par_iter().map(run).collect::<Result<Vec<_>, _>>())?;
    let order = |b: &str| PrivacyBackend::ALL.iter().position(|x| x.as_str() == b).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| order(&a.backend).cmp(&order(&b.backend)).then(a.lambda.total_cmp(&b.lambda)));
    Ok(rows)
}
