//! Subcommands. Each one resolves its configuration, does its work, and
//! writes a manifest next to its primary output.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use pcmu::attack::{eval_load_attacker, eval_occupancy_attacker, train_load_attacker, train_occupancy_attacker};
use pcmu::env::Trajectory;
use pcmu::mi::{ksg_mi, per_step_mi, welch_psd, KsgConfig};
use pcmu::privacy::PrivacyBackend;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::io::{self, TrajectorySet};
use crate::manifest::Manifest;
use crate::pipeline::{self, SweepSpec};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "pcmu", version, about = "Train and evaluate battery-based privacy-cost management for smart meters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Write the configured episodes as a load CSV.
    GenData(GenDataArgs),
    /// Train one policy and write its checkpoint and training log.
    Train(TrainArgs),
    /// Train and evaluate one policy per (lambda, backend) pair.
    Sweep(SweepArgs),
    /// Roll out a trained policy and write trajectories.
    Evaluate(EvaluateArgs),
    /// Fit attackers on training trajectories and score them on test ones.
    Attack(AttackArgs),
    /// KSG mutual information of trajectories or scalar pairs.
    EstimateMi(EstimateMiArgs),
    /// Welch power spectral density of demand and grid load.
    Psd(PsdArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct GenDataArgs {
    #[arg(long, env = "PCMU_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "PCMU_OUT")]
    pub out: PathBuf,
    /// Overrides `data.synthetic.seed`.
    #[arg(long, env = "PCMU_SEED")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long, env = "PCMU_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides `train.lambda`.
    #[arg(long, env = "PCMU_LAMBDA")]
    pub lambda: Option<f64>,
    #[arg(long, env = "PCMU_BACKEND", default_value = "mi-general")]
    pub backend: PrivacyBackend,
    #[arg(long, env = "PCMU_OUT_CHECKPOINT")]
    pub out_checkpoint: PathBuf,
    /// Training log CSV.
    #[arg(long, env = "PCMU_LOG")]
    pub log: Option<PathBuf>,
    /// Overrides `train.episodes`.
    #[arg(long, env = "PCMU_EPISODES")]
    pub episodes: Option<usize>,
    /// Overrides `train.seed`.
    #[arg(long, env = "PCMU_SEED")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long, env = "PCMU_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "PCMU_LAMBDAS", value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
    pub lambdas: Vec<f64>,
    #[arg(long, env = "PCMU_BACKENDS", value_delimiter = ',', default_value = "flatness,mi-iid,mi-general")]
    pub backends: Vec<PrivacyBackend>,
    #[arg(long, env = "PCMU_JOBS", default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, env = "PCMU_OUT")]
    pub out: PathBuf,
    /// Master seed; defaults to `train.seed`.
    #[arg(long, env = "PCMU_SEED")]
    pub seed: Option<u64>,
    /// Overrides `train.episodes`.
    #[arg(long, env = "PCMU_EPISODES")]
    pub episodes: Option<usize>,
    /// Skip the attacker columns.
    #[arg(long, env = "PCMU_NO_ATTACKERS")]
    pub no_attackers: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long, env = "PCMU_CHECKPOINT")]
    pub checkpoint: PathBuf,
    #[arg(long, env = "PCMU_SPLIT", value_enum, value_delimiter = ',', default_value = "test")]
    pub split: Vec<SplitName>,
    /// Trajectory CSV; a `<out>.summary.csv` with cost and MI per split is
    /// written beside it.
    #[arg(long, env = "PCMU_OUT")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Which {
    Load,
    Occupancy,
    Both,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct AttackArgs {
    #[arg(long, env = "PCMU_CONFIG")]
    pub config: Option<PathBuf>,
    /// Trajectory CSV holding both a training and a test split.
    #[arg(long, env = "PCMU_TRAJECTORIES")]
    pub trajectories: PathBuf,
    #[arg(long, env = "PCMU_WHICH", value_enum, default_value = "both")]
    pub which: Which,
    #[arg(long, env = "PCMU_TRAIN_SPLIT", value_enum, default_value = "train")]
    pub train_split: SplitName,
    #[arg(long, env = "PCMU_TEST_SPLIT", value_enum, default_value = "test")]
    pub test_split: SplitName,
    #[arg(long, env = "PCMU_OUT")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct EstimateMiArgs {
    #[arg(long, env = "PCMU_CONFIG")]
    pub config: Option<PathBuf>,
    /// Trajectory CSV; one row per split.
    #[arg(long, env = "PCMU_TRAJECTORIES", conflicts_with = "pairs", required_unless_present = "pairs")]
    pub trajectories: Option<PathBuf>,
    /// CSV with `x,y` columns of scalar samples.
    #[arg(long, env = "PCMU_PAIRS")]
    pub pairs: Option<PathBuf>,
    /// Overrides `estimators.ksg.k_neighbors`.
    #[arg(long, env = "PCMU_K")]
    pub k: Option<usize>,
    #[arg(long, env = "PCMU_OUT")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct PsdArgs {
    #[arg(long, env = "PCMU_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "PCMU_TRAJECTORY")]
    pub trajectory: PathBuf,
    #[arg(long, env = "PCMU_SPLIT", value_enum, default_value = "test")]
    pub split: SplitName,
    /// Single episode index; by default spectra are averaged over the split.
    #[arg(long, env = "PCMU_EPISODE")]
    pub episode: Option<usize>,
    #[arg(long, env = "PCMU_OUT")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long, env = "PCMU_MANIFEST")]
    pub manifest: PathBuf,
    /// Write outputs into this directory (same file names) instead of the
    /// recorded locations.
    #[arg(long, env = "PCMU_OUTPUT_ROOT")]
    pub output_root: Option<PathBuf>,
}

impl Command {
    fn config_path(&self) -> Option<&Path> {
        match self {
            Command::GenData(a) => a.config.as_deref(),
            Command::Train(a) => a.config.as_deref(),
            Command::Sweep(a) => a.config.as_deref(),
            Command::Attack(a) => a.config.as_deref(),
            Command::EstimateMi(a) => a.config.as_deref(),
            Command::Psd(a) => a.config.as_deref(),
            Command::Evaluate(_) | Command::Replay(_) => None,
        }
    }

    /// Output paths, primary first.
    fn outputs_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            Command::GenData(a) => vec![&mut a.out],
            Command::Train(a) => std::iter::once(&mut a.out_checkpoint).chain(a.log.as_mut()).collect(),
            Command::Sweep(a) => vec![&mut a.out],
            Command::Evaluate(a) => vec![&mut a.out],
            Command::Attack(a) => vec![&mut a.out],
            Command::EstimateMi(a) => vec![&mut a.out],
            Command::Psd(a) => vec![&mut a.out],
            Command::Replay(_) => Vec::new(),
        }
    }
}

/// Parses the configuration named by the command (defaults otherwise) and
/// runs it.
pub fn run(command: Command) -> Result<(), CliError> {
    if let Command::Replay(args) = &command {
        return replay(args);
    }
    let config = RunConfig::load_or_default(command.config_path())?;
    execute(command, config)
}

fn replay(args: &ReplayArgs) -> Result<(), CliError> {
    let manifest = Manifest::load(&args.manifest)?;
    let mut command = manifest.command;
    if let Command::Replay(_) = command {
        return Err(CliError::Usage("a manifest cannot record a replay".into()));
    }
    if let Some(root) = &args.output_root {
        for out in command.outputs_mut() {
            let name = out.file_name().ok_or_else(|| CliError::Usage(format!("output {} has no file name", out.display())))?;
            *out = root.join(name);
        }
    }
    info!("replaying {}", args.manifest.display());
    execute(command, manifest.config)
}

/// Runs with an already resolved configuration; the manifest records
/// exactly this pair.
pub fn execute(command: Command, config: RunConfig) -> Result<(), CliError> {
    let mut command = command;
    let primary = command.outputs_mut().first().map(|p| p.to_path_buf());
    let resolved = match &command {
        Command::GenData(a) => gen_data(a, config)?,
        Command::Train(a) => train(a, config)?,
        Command::Sweep(a) => sweep(a, config)?,
        Command::Evaluate(a) => evaluate(a)?,
        Command::Attack(a) => attack(a, config)?,
        Command::EstimateMi(a) => estimate_mi(a, config)?,
        Command::Psd(a) => psd(a, config)?,
        Command::Replay(_) => unreachable!("handled by run"),
    };
    if let Some(out) = primary {
        let path = Manifest::new(command, resolved).write_next_to(&out)?;
        info!("wrote {}", path.display());
    }
    Ok(())
}

fn gen_data(args: &GenDataArgs, mut config: RunConfig) -> Result<RunConfig, CliError> {
    if let Some(seed) = args.seed {
        config.data.synthetic.seed = seed;
    }
    let episodes = pipeline::load_episodes(&config)?;
    io::write_episodes_csv(&args.out, &episodes, config.env.delta_t)?;
    info!("wrote {} episodes to {}", episodes.len(), args.out.display());
    Ok(config)
}

fn train(args: &TrainArgs, mut config: RunConfig) -> Result<RunConfig, CliError> {
    if let Some(l) = args.lambda {
        config.train.lambda = l;
    }
    if let Some(e) = args.episodes {
        config.train.episodes = e;
    }
    if let Some(s) = args.seed {
        config.train.seed = s;
    }
    config.validate()?;
    let split = pipeline::load_split(&config)?;
    let mut trainer = pipeline::new_trainer(&config, &split, args.backend, config.train.lambda, config.train.seed, None)?;
    while trainer.episodes_done() < config.train.episodes {
        let row = trainer.run_episode()?;
        if (row.episode + 1) % 50 == 0 {
            info!("episode {} reward {:.3} epsilon {:.3}", row.episode + 1, row.total_reward, row.epsilon);
        }
    }
    pipeline::run_checkpoint(&trainer, &config).save(&args.out_checkpoint)?;
    if let Some(log) = &args.log {
        io::write_log(log, trainer.log())?;
    }
    Ok(config)
}

fn sweep(args: &SweepArgs, config: RunConfig) -> Result<RunConfig, CliError> {
    if args.lambdas.is_empty() || args.backends.is_empty() {
        return Err(CliError::Usage("need at least one lambda and one backend".into()));
    }
    let split = pipeline::load_split(&config)?;
    let spec = SweepSpec {
        lambdas: args.lambdas.clone(),
        backends: args.backends.clone(),
        master_seed: args.seed.unwrap_or(config.train.seed),
        episodes: args.episodes,
        jobs: args.jobs,
        attackers: !args.no_attackers,
    };
    let rows = pipeline::sweep(&config, &split, &spec)?;
    io::write_tradeoff(&args.out, &rows)?;
    Ok(config)
}

fn evaluate(args: &EvaluateArgs) -> Result<RunConfig, CliError> {
    let (config, split, trainer) = pipeline::restore_run(&args.checkpoint)?;
    let mut rolled: Vec<(&str, Vec<Trajectory>)> = Vec::new();
    for name in &args.split {
        let episodes = match name {
            SplitName::Train => &split.train,
            SplitName::Val => &split.val,
            SplitName::Test => &split.test,
        };
        rolled.push((name.as_str(), trainer.evaluate(episodes)?));
    }
    let view: Vec<(&str, &[Trajectory])> = rolled.iter().map(|(n, t)| (*n, t.as_slice())).collect();
    io::write_trajectories(&args.out, &view)?;

    let mut rows = Vec::new();
    for (name, trajs) in &rolled {
        let cost = pipeline::cost_per_day(trainer.env(), trajs)?;
        let mi = pipeline::trajectory_mi(&config, trajs)?;
        println!("{name}: cost_per_day {cost} ksg_mi_nats {mi}");
        rows.push(vec![name.to_string(), trajs.len().to_string(), cost.to_string(), mi.to_string()]);
    }
    io::write_table(&summary_path(&args.out), "split,episodes,cost_per_day,ksg_mi_nats", &rows)?;
    Ok(config)
}

/// `<out>.summary.csv`
pub fn summary_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".summary.csv");
    out.with_file_name(name)
}

fn attack(args: &AttackArgs, config: RunConfig) -> Result<RunConfig, CliError> {
    let set = io::read_trajectories(&args.trajectories)?;
    let train = set.samples(args.train_split.as_str())?;
    let test = set.samples(args.test_split.as_str())?;
    let mut rows = Vec::new();
    if matches!(args.which, Which::Load | Which::Both) {
        let a = train_load_attacker(&train, &config.attacker.load)?;
        let v = eval_load_attacker(&a, &test)?;
        rows.push(vec!["load".into(), train.len().to_string(), test.len().to_string(), v.to_string(), String::new()]);
    }
    if matches!(args.which, Which::Occupancy | Which::Both) {
        let a = train_occupancy_attacker(&train, &config.attacker.occupancy)?;
        let v = eval_occupancy_attacker(&a, &test)?;
        rows.push(vec!["occupancy".into(), train.len().to_string(), test.len().to_string(), String::new(), v.to_string()]);
    }
    io::write_table(&args.out, "attacker,train_episodes,test_episodes,normalized_error,balanced_accuracy", &rows)?;
    Ok(config)
}

#[derive(Debug, Deserialize)]
struct PairRow {
    x: f64,
    y: f64,
}

fn estimate_mi(args: &EstimateMiArgs, mut config: RunConfig) -> Result<RunConfig, CliError> {
    if let Some(k) = args.k {
        config.estimators.ksg.k_neighbors = k;
    }
    config.validate()?;
    let ksg: &KsgConfig = &config.estimators.ksg;
    let mut rows = Vec::new();
    match (&args.trajectories, &args.pairs) {
        (Some(path), None) => {
            let set: TrajectorySet = io::read_trajectories(path)?;
            for (split, trajs) in &set.splits {
                let ys: Vec<Vec<f64>> = trajs.iter().map(|t| t.demand_kw.clone()).collect();
                let zs: Vec<Vec<f64>> = trajs.iter().map(|t| t.grid_kw.clone()).collect();
                let joint = pipeline::trajectory_mi(&config, trajs)?;
                let step = per_step_mi(&ys, &zs, ksg)?;
                rows.push(vec![split.clone(), "episode".into(), trajs.len().to_string(), ksg.k_neighbors.to_string(), joint.to_string()]);
                rows.push(vec![split.clone(), "per-step-mean".into(), trajs.len().to_string(), ksg.k_neighbors.to_string(), step.to_string()]);
            }
        }
        (None, Some(path)) => {
            let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
            let pairs = csv::Reader::from_reader(file)
                .deserialize::<PairRow>()
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let xs: Vec<Vec<f64>> = pairs.iter().map(|p| vec![p.x]).collect();
            let ys: Vec<Vec<f64>> = pairs.iter().map(|p| vec![p.y]).collect();
            let mi = ksg_mi(&xs, &ys, ksg)?;
            rows.push(vec!["pairs".into(), "scalar".into(), pairs.len().to_string(), ksg.k_neighbors.to_string(), mi.to_string()]);
        }
        _ => return Err(CliError::Usage("give exactly one of --trajectories or --pairs".into())),
    }
    io::write_table(&args.out, "source,scope,samples,k,mi_nats", &rows)?;
    Ok(config)
}

fn psd(args: &PsdArgs, config: RunConfig) -> Result<RunConfig, CliError> {
    let set = io::read_trajectories(&args.trajectory)?;
    let trajs = set.get(args.split.as_str())?;
    let chosen: Vec<&Trajectory> = match args.episode {
        Some(i) => vec![trajs.get(i).ok_or_else(|| CliError::Usage(format!("episode {i} out of range (have {})", trajs.len())))?],
        None => trajs.iter().collect(),
    };
    let cfg = &config.estimators.psd;
    let mut freqs = Vec::new();
    let (mut demand, mut grid) = (Vec::new(), Vec::new());
    for t in &chosen {
        let d = welch_psd(&t.demand_kw, cfg)?;
        let g = welch_psd(&t.grid_kw, cfg)?;
        if demand.is_empty() {
            freqs = d.frequencies.clone();
            demand = vec![0.0; freqs.len()];
            grid = vec![0.0; freqs.len()];
        }
        let n = chosen.len() as f64;
        demand.iter_mut().zip(&d.power).for_each(|(a, p)| *a += p / n);
        grid.iter_mut().zip(&g.power).for_each(|(a, p)| *a += p / n);
    }
    let rows: Vec<Vec<String>> = (0..freqs.len()).map(|i| vec![freqs[i].to_string(), demand[i].to_string(), grid[i].to_string()]).collect();
    io::write_table(&args.out, "frequency,demand_power,grid_power", &rows)?;
    Ok(config)
}
