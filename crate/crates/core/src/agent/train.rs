use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{masked_argmax, select_action, state_features, sync_target, td_targets, update_q, AgentError, QNetConfig, Transition};
use crate::buffer::RingBuffer;
use crate::data::{load_params, save_params, BlockData, Checkpoint, DataError, Persist};
use crate::env::{EnvState, Environment, LoadEpisode, Policy, Trajectory};
use crate::nn::{DenseStack, RmsProp, RmsPropConfig};
use crate::privacy::{
    combined_loss, flatness_signal, leakage_episode_general, leakage_pointwise_iid, leakage_table_general, Discretizer, EpisodePair, GeneralSignal,
    HNetFeedforward, HNetRecurrent, PrivacyBackend, PrivacyConfig, PrivacyTable, StepPair,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub lambda: f64,
    pub gamma: f64,
    /// Q-network update period in environment steps.
    pub train_every: usize,
    /// Target sync and H-network refresh period in environment steps.
    pub copy_every: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of `episodes` over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    /// Restrict the bootstrap max to feasible successor actions.
    pub mask_target_max: bool,
    /// Fill the `wall_ms` log column; off keeps logs reproducible.
    pub record_wall_time: bool,
    pub seed: u64,
    pub qnet: QNetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            lambda: 0.5,
            gamma: 1.0,
            train_every: 8,
            copy_every: 500,
            batch_size: 128,
            buffer_capacity: 10_000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.5,
            mask_target_max: true,
            record_wall_time: false,
            seed: 0,
            qnet: QNetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if [self.train_every, self.copy_every, self.batch_size, self.buffer_capacity, self.qnet.hidden].contains(&0) {
            return bad("periods and sizes must be positive");
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.epsilon_start) || !unit(self.epsilon_end) || !unit(self.epsilon_decay_fraction) {
            return bad("epsilon schedule values must lie in [0, 1]");
        }
        if !(self.qnet.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }

    /// Linear decay from start to end over the first fraction of episodes.
    pub fn epsilon_at(&self, episode: usize) -> f64 {
        let horizon = self.epsilon_decay_fraction * self.episodes as f64;
        let frac = if horizon <= 0.0 { 1.0 } else { (episode as f64 / horizon).min(1.0) };
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub total_reward: f64,
    pub epsilon: f64,
    /// Mean H-network loss over refreshes during this episode.
    pub hnet_loss: Option<f64>,
    pub cost_signal: f64,
    pub billed_cost: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug)]
enum Helper {
    None,
    Iid {
        net: HNetFeedforward,
        buffer: RingBuffer<StepPair>,
    },
    General {
        net: HNetRecurrent,
        buffer: RingBuffer<EpisodePair>,
        table: PrivacyTable,
    },
}

/// Greedy policy extracted from a Q-network.
#[derive(Clone, Debug, PartialEq)]
pub struct GreedyPolicy {
    pub qnet: DenseStack,
    pub demand_scale: f64,
    pub horizon: usize,
    pub clock: bool,
}

impl GreedyPolicy {
    pub fn choose(&self, state: &EnvState, mask: &[bool]) -> usize {
        let q = self
            .qnet
            .predict(&state_features(state, self.demand_scale, self.horizon, self.clock))
            .expect("feature width matches the network");
        masked_argmax(&q, mask).expect("zero action is always feasible")
    }
}

impl Policy for GreedyPolicy {
    fn select(&mut self, state: &EnvState, mask: &[bool], _rng: &mut dyn RngCore) -> usize {
        self.choose(state, mask)
    }
}

/// Single-threaded owner of every network, buffer and RNG of one run.
#[derive(Clone, Debug)]
pub struct Trainer {
    env: Environment,
    train: Vec<LoadEpisode>,
    backend: PrivacyBackend,
    config: TrainConfig,
    privacy: PrivacyConfig,
    disc: Discretizer,
    qnet: DenseStack,
    target: DenseStack,
    optimizer: RmsProp,
    replay: RingBuffer<Transition>,
    helper: Helper,
    rng: ChaCha8Rng,
    episode: usize,
    steps: u64,
    refresh_losses: Vec<f64>,
    log: Vec<EpisodeLog>,
}

impl Trainer {
    pub fn new(env: Environment, train: Vec<LoadEpisode>, backend: PrivacyBackend, config: TrainConfig, privacy: PrivacyConfig) -> Result<Self, AgentError> {
        config.validate()?;
        privacy.validate()?;
        if train.is_empty() {
            return Err(AgentError::EmptyDataset);
        }
        if let Some(bad) = train.iter().find(|e| e.len() != env.horizon()) {
            return Err(crate::env::EnvError::EpisodeLength {
                expected: env.horizon(),
                actual: bad.len(),
            }
            .into());
        }
        let disc = Discretizer::fit(privacy.n_bins, train.iter().map(|e| e.demand_kw.as_slice()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let qnet = config.qnet.build(env.n_actions(), &mut rng);
        let target = config.qnet.build(env.n_actions(), &mut rng);
        let optimizer = RmsProp::new(RmsPropConfig::with_learning_rate(config.qnet.learning_rate), &qnet);
        let helper = match backend {
            PrivacyBackend::Flatness => Helper::None,
            PrivacyBackend::MiIid => Helper::Iid {
                net: HNetFeedforward::new(privacy.n_bins, privacy.ff_hidden, privacy.hnet_learning_rate, &mut rng),
                buffer: RingBuffer::new(privacy.ff_buffer_steps),
            },
            PrivacyBackend::MiGeneral => Helper::General {
                net: HNetRecurrent::new(privacy.n_bins, privacy.rnn_hidden, privacy.rnn_layers, privacy.hnet_learning_rate, &mut rng),
                buffer: RingBuffer::new(privacy.episode_buffer),
                table: PrivacyTable::uniform(env.horizon(), privacy.n_bins),
            },
        };
        let replay = RingBuffer::new(config.buffer_capacity);
        Ok(Self {
            env,
            train,
            backend,
            config,
            privacy,
            disc,
            qnet,
            target,
            optimizer,
            replay,
            helper,
            rng,
            episode: 0,
            steps: 0,
            refresh_losses: Vec::new(),
            log: Vec::new(),
        })
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn backend(&self) -> PrivacyBackend {
        self.backend
    }

    pub fn discretizer(&self) -> &Discretizer {
        &self.disc
    }

    pub fn qnet(&self) -> &DenseStack {
        &self.qnet
    }

    pub fn target(&self) -> &DenseStack {
        &self.target
    }

    pub fn log(&self) -> &[EpisodeLog] {
        &self.log
    }

    pub fn episodes_done(&self) -> usize {
        self.episode
    }

    pub fn steps_done(&self) -> u64 {
        self.steps
    }

    /// Loss of every H-network refresh so far, in order.
    pub fn hnet_losses(&self) -> &[f64] {
        &self.refresh_losses
    }

    pub fn privacy_table(&self) -> Option<&PrivacyTable> {
        match &self.helper {
            Helper::General { table, .. } => Some(table),
            _ => None,
        }
    }

    pub fn greedy_policy(&self) -> GreedyPolicy {
        GreedyPolicy {
            qnet: self.qnet.clone(),
            demand_scale: self.disc.y_hi(),
            horizon: self.env.horizon(),
            clock: self.config.qnet.clock_feature,
        }
    }

    /// Greedy rollouts over the given episodes.
    pub fn evaluate(&self, episodes: &[LoadEpisode]) -> Result<Vec<Trajectory>, AgentError> {
        let mut policy = self.greedy_policy();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        episodes
            .iter()
            .map(|e| Ok(self.env.rollout(&mut policy, e, &mut rng)?))
            .collect()
    }

    fn features(&self, state: &EnvState) -> Vec<f64> {
        state_features(state, self.disc.y_hi(), self.env.horizon(), self.config.qnet.clock_feature)
    }

    fn privacy_scale(&self) -> f64 {
        if self.privacy.normalize {
            1.0 / (self.privacy.n_bins as f64).ln()
        } else {
            1.0
        }
    }

    fn deferred_rewards(&self) -> bool {
        self.privacy.general_signal == GeneralSignal::Episode && self.backend == PrivacyBackend::MiGeneral && self.config.lambda < 1.0
    }

    /// Runs episodes until `config.episodes` have been played.
    pub fn train(&mut self) -> Result<&[EpisodeLog], AgentError> {
        while self.episode < self.config.episodes {
            self.run_episode()?;
        }
        Ok(&self.log)
    }

    pub fn run_episode(&mut self) -> Result<EpisodeLog, AgentError> {
        let started = Instant::now();
        let epsilon = self.config.epsilon_at(self.episode);
        let idx = self.rng.random_range(0..self.train.len());
        let y = self.train[idx].demand_kw.clone();
        let horizon = self.env.horizon();
        let lambda = self.config.lambda;
        let scale = self.privacy_scale();
        let deferred = self.deferred_rewards();
        let losses_before = self.refresh_losses.len();

        let mut state = self.env.initial_state(y[0]);
        let mut z = Vec::with_capacity(horizon);
        let mut g = Vec::with_capacity(horizon);
        let mut pending = Vec::new();
        let mut total_reward = 0.0;
        for i in 0..horizon {
            let mask = self.env.feasible_mask(&state);
            let features = self.features(&state);
            let a = select_action(&self.qnet, &features, &mask, epsilon, &mut self.rng)?;
            let action = self.env.actions()[a];
            let (next, zt) = self.env.step(&state, action, y.get(i + 1).copied().unwrap_or(0.0))?;
            let gt = self.env.cost_signal(action, state.t)?;
            let privacy_term = if lambda == 1.0 {
                0.0
            } else {
                match &self.helper {
                    Helper::None => flatness_signal(zt, &self.privacy.flatness),
                    Helper::Iid { net, .. } => scale * leakage_pointwise_iid(net, y[i], zt, &self.disc)?,
                    Helper::General { table, .. } => scale * table.at(i),
                }
            };
            let transition = Transition {
                state: features,
                action: a,
                reward: -combined_loss(gt, privacy_term, lambda)?,
                next_state: self.features(&next),
                next_mask: self.env.feasible_mask(&next),
                terminal: i + 1 == horizon,
            };
            if deferred {
                pending.push(transition);
            } else {
                total_reward += transition.reward;
                self.replay.push(transition);
            }
            z.push(zt);
            g.push(gt);
            self.steps += 1;
            self.after_step()?;
            state = next;
        }

        match &mut self.helper {
            Helper::None => {}
            Helper::Iid { buffer, .. } => y.iter().zip(&z).for_each(|(&y, &z)| buffer.push(StepPair { y, z })),
            Helper::General { net, buffer, .. } => {
                if deferred {
                    let f = leakage_episode_general(net, &y, &z, &self.disc)?;
                    for ((mut tr, ft), gt) in pending.into_iter().zip(f).zip(&g) {
                        tr.reward = -combined_loss(*gt, scale * ft, lambda)?;
                        total_reward += tr.reward;
                        self.replay.push(tr);
                    }
                }
                buffer.push(EpisodePair { y: y.clone(), z: z.clone() });
            }
        }

        let new_losses = &self.refresh_losses[losses_before..];
        let entry = EpisodeLog {
            episode: self.episode,
            total_reward,
            epsilon,
            hnet_loss: (!new_losses.is_empty()).then(|| new_losses.iter().sum::<f64>() / new_losses.len() as f64),
            cost_signal: g.iter().sum(),
            billed_cost: self.env.billed_cost(&z)?,
            wall_ms: if self.config.record_wall_time { started.elapsed().as_millis() as u64 } else { 0 },
        };
        self.episode += 1;
        self.log.push(entry.clone());
        Ok(entry)
    }

    fn after_step(&mut self) -> Result<(), AgentError> {
        let c = &self.config;
        if self.steps.is_multiple_of(c.train_every as u64) && self.replay.len() >= c.batch_size {
            let batch = self.replay.sample(c.batch_size, &mut self.rng);
            let targets = td_targets(&batch, &self.target, c.gamma, c.mask_target_max)?;
            update_q(&mut self.qnet, &mut self.optimizer, &batch, &targets)?;
        }
        if self.steps.is_multiple_of(c.copy_every as u64) {
            sync_target(&self.qnet, &mut self.target);
            self.refresh_helper()?;
        }
        Ok(())
    }

    fn refresh_helper(&mut self) -> Result<(), AgentError> {
        let p = &self.privacy;
        let loss = match &mut self.helper {
            Helper::None => None,
            Helper::Iid { net, buffer } => net.refresh(buffer, &self.disc, p.ff_batch, p.refresh_minibatches, &mut self.rng)?,
            Helper::General { net, buffer, table } => {
                let loss = net.refresh(buffer, &self.disc, p.rnn_batch, p.refresh_minibatches, &mut self.rng)?;
                if loss.is_some() && p.general_signal == GeneralSignal::Table {
                    *table = leakage_table_general(net, buffer, &self.disc, p.rnn_batch, self.steps, &mut self.rng)?;
                }
                loss
            }
        };
        self.refresh_losses.extend(loss);
        Ok(())
    }

    /// Complete state: networks, optimizers, buffers, RNG, counters and log.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.put_text("backend", self.backend.as_str());
        ck.put_u64s("counters", vec![self.episode as u64, self.steps]);
        ck.put_tensor("discretizer", vec![3], vec![self.disc.n_bins() as f64, self.disc.y_lo(), self.disc.y_hi()]);
        self.qnet.save_into(&mut ck, "qnet");
        self.target.save_into(&mut ck, "target");
        self.optimizer.save_into(&mut ck, "qnet_opt");
        self.rng.save_into(&mut ck, "rng");
        save_transitions(&self.replay, &mut ck);
        ck.put_tensor("hnet_losses", vec![self.refresh_losses.len()], self.refresh_losses.clone());
        save_log(&self.log, &mut ck);
        match &self.helper {
            Helper::None => {}
            Helper::Iid { net, buffer } => {
                net.net.save_into(&mut ck, "hnet");
                net.optimizer.save_into(&mut ck, "hnet_opt");
                let (cap, items, next) = buffer.as_parts();
                ck.put_u64s("hnet_buffer/meta", vec![cap as u64, next as u64]);
                ck.put_tensor("hnet_buffer/pairs", vec![items.len(), 2], items.iter().flat_map(|p| [p.y, p.z]).collect());
            }
            Helper::General { net, buffer, table } => {
                save_params(&net.params, &mut ck, "hnet");
                net.optimizer.save_into(&mut ck, "hnet_opt");
                let (cap, items, next) = buffer.as_parts();
                let t = self.env.horizon();
                ck.put_u64s("hnet_buffer/meta", vec![cap as u64, next as u64]);
                ck.put_tensor("hnet_buffer/y", vec![items.len(), t], items.iter().flat_map(|e| e.y.iter().copied()).collect());
                ck.put_tensor("hnet_buffer/z", vec![items.len(), t], items.iter().flat_map(|e| e.z.iter().copied()).collect());
                ck.put_tensor("table", vec![table.f_hat.len()], table.f_hat.clone());
                ck.put_u64s("table/refreshed_at", vec![table.refreshed_at]);
            }
        }
        ck
    }

    /// Rebuilds a trainer from [`Trainer::to_checkpoint`] output. The
    /// environment, data and configuration must match the original run.
    pub fn from_checkpoint(
        ck: &Checkpoint,
        env: Environment,
        train: Vec<LoadEpisode>,
        backend: PrivacyBackend,
        config: TrainConfig,
        privacy: PrivacyConfig,
    ) -> Result<Self, AgentError> {
        let mut tr = Self::new(env, train, backend, config, privacy)?;
        if ck.text("backend")? != backend.as_str() {
            return Err(DataError::Malformed("checkpoint was written by a different privacy backend".into()).into());
        }
        let counters = ck.u64s("counters")?;
        if counters.len() != 2 {
            return Err(DataError::Malformed("counters block must hold 2 values".into()).into());
        }
        tr.episode = counters[0] as usize;
        tr.steps = counters[1];
        let (_, d) = ck.tensor("discretizer")?;
        if d.len() != 3 {
            return Err(DataError::Malformed("discretizer block must hold 3 values".into()).into());
        }
        tr.disc = Discretizer::new(d[0] as usize, d[1], d[2])?;
        tr.qnet.load_from(ck, "qnet")?;
        tr.target.load_from(ck, "target")?;
        tr.optimizer.load_from(ck, "qnet_opt")?;
        tr.rng.load_from(ck, "rng")?;
        tr.replay = load_transitions(ck)?;
        tr.refresh_losses = ck.tensor("hnet_losses")?.1.to_vec();
        tr.log = load_log(ck)?;
        let horizon = tr.env.horizon();
        match &mut tr.helper {
            Helper::None => {}
            Helper::Iid { net, buffer } => {
                net.net.load_from(ck, "hnet")?;
                net.optimizer.load_from(ck, "hnet_opt")?;
                let meta = ck.u64s("hnet_buffer/meta")?;
                let (_, pairs) = ck.tensor("hnet_buffer/pairs")?;
                let items = pairs.chunks(2).map(|c| StepPair { y: c[0], z: c[1] }).collect();
                *buffer = ring_from(meta, items)?;
            }
            Helper::General { net, buffer, table } => {
                load_params(&mut net.params, ck, "hnet")?;
                net.optimizer.load_from(ck, "hnet_opt")?;
                let meta = ck.u64s("hnet_buffer/meta")?;
                let (_, ys) = ck.tensor("hnet_buffer/y")?;
                let (_, zs) = ck.tensor("hnet_buffer/z")?;
                let items = ys
                    .chunks(horizon)
                    .zip(zs.chunks(horizon))
                    .map(|(y, z)| EpisodePair { y: y.to_vec(), z: z.to_vec() })
                    .collect();
                *buffer = ring_from(meta, items)?;
                table.f_hat = ck.tensor("table")?.1.to_vec();
                table.refreshed_at = ck.u64s("table/refreshed_at")?.first().copied().unwrap_or(0);
            }
        }
        Ok(tr)
    }
}

fn ring_from<T>(meta: &[u64], items: Vec<T>) -> Result<RingBuffer<T>, DataError> {
    match meta {
        [cap, next] => RingBuffer::from_parts(*cap as usize, items, *next as usize).ok_or_else(|| DataError::Malformed("inconsistent buffer layout".into())),
        _ => Err(DataError::Malformed("buffer meta must hold 2 values".into())),
    }
}

fn save_transitions(buffer: &RingBuffer<Transition>, ck: &mut Checkpoint) {
    let (cap, items, next) = buffer.as_parts();
    let fw = items.first().map_or(0, |t| t.state.len());
    let na = items.first().map_or(0, |t| t.next_mask.len());
    ck.put_u64s("replay/meta", vec![cap as u64, next as u64]);
    ck.put_tensor("replay/state", vec![items.len(), fw], items.iter().flat_map(|t| t.state.iter().copied()).collect());
    ck.put_tensor("replay/next_state", vec![items.len(), fw], items.iter().flat_map(|t| t.next_state.iter().copied()).collect());
    ck.put_tensor("replay/reward", vec![items.len()], items.iter().map(|t| t.reward).collect());
    ck.put_u64s("replay/action", items.iter().map(|t| t.action as u64).collect());
    ck.put_u64s("replay/terminal", items.iter().map(|t| t.terminal as u64).collect());
    ck.put_tensor(
        "replay/next_mask",
        vec![items.len(), na],
        items.iter().flat_map(|t| t.next_mask.iter().map(|&m| if m { 1.0 } else { 0.0 })).collect(),
    );
}

fn load_transitions(ck: &Checkpoint) -> Result<RingBuffer<Transition>, DataError> {
    let meta = ck.u64s("replay/meta")?;
    let (sd, states) = ck.tensor("replay/state")?;
    let (_, next_states) = ck.tensor("replay/next_state")?;
    let (md, masks) = ck.tensor("replay/next_mask")?;
    let (_, rewards) = ck.tensor("replay/reward")?;
    let actions = ck.u64s("replay/action")?;
    let terminal = ck.u64s("replay/terminal")?;
    let n = rewards.len();
    if sd.len() != 2 || md.len() != 2 || sd[0] != n || md[0] != n || actions.len() != n || terminal.len() != n {
        return Err(DataError::Malformed("replay blocks disagree in length".into()));
    }
    let (fw, na) = (sd[1], md[1]);
    let items = (0..n)
        .map(|i| Transition {
            state: states[i * fw..(i + 1) * fw].to_vec(),
            action: actions[i] as usize,
            reward: rewards[i],
            next_state: next_states[i * fw..(i + 1) * fw].to_vec(),
            next_mask: masks[i * na..(i + 1) * na].iter().map(|&m| m != 0.0).collect(),
            terminal: terminal[i] != 0,
        })
        .collect();
    ring_from(meta, items)
}

const LOG_COLUMNS: usize = 7;

fn save_log(log: &[EpisodeLog], ck: &mut Checkpoint) {
    let values = log
        .iter()
        .flat_map(|e| {
            [
                e.episode as f64,
                e.total_reward,
                e.epsilon,
                e.hnet_loss.unwrap_or(f64::NAN),
                e.cost_signal,
                e.billed_cost,
                e.wall_ms as f64,
            ]
        })
        .collect();
    ck.insert(
        "log",
        BlockData::Tensor {
            dims: vec![log.len(), LOG_COLUMNS],
            values,
        },
    );
}

fn load_log(ck: &Checkpoint) -> Result<Vec<EpisodeLog>, DataError> {
    let (_, values) = ck.tensor("log")?;
    Ok(values
        .chunks(LOG_COLUMNS)
        .map(|r| EpisodeLog {
            episode: r[0] as usize,
            total_reward: r[1],
            epsilon: r[2],
            hnet_loss: (!r[3].is_nan()).then_some(r[3]),
            cost_signal: r[4],
            billed_cost: r[5],
            wall_ms: r[6] as u64,
        })
        .collect())
}
