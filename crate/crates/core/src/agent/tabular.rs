use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sync_target, td_targets, update_q, AgentError, Transition};
use crate::buffer::RingBuffer;
use crate::nn::{Activation, DenseStack, RmsProp, RmsPropConfig};

pub const MAX_ORACLE_STATES: usize = 20;
pub const MAX_ORACLE_ACTIONS: usize = 5;

/// Explicit finite MDP with discounting, used as a test oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallMdp {
    /// `transitions[s][a]` lists `(next_state, probability)`.
    pub transitions: Vec<Vec<Vec<(usize, f64)>>>,
    pub rewards: Vec<Vec<f64>>,
    pub gamma: f64,
}

impl SmallMdp {
    pub fn n_states(&self) -> usize {
        self.transitions.len()
    }

    pub fn n_actions(&self) -> usize {
        self.transitions.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let (ns, na) = (self.n_states(), self.n_actions());
        let bad = |m: String| Err(AgentError::InvalidConfig(m));
        if ns == 0 || ns > MAX_ORACLE_STATES || na == 0 || na > MAX_ORACLE_ACTIONS {
            return bad(format!("oracle MDP must have 1..={MAX_ORACLE_STATES} states and 1..={MAX_ORACLE_ACTIONS} actions"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("oracle MDP needs gamma in [0, 1)".into());
        }
        if self.rewards.len() != ns || self.rewards.iter().any(|r| r.len() != na || r.iter().any(|v| !v.is_finite())) {
            return bad("rewards must be finite with one entry per state and action".into());
        }
        for row in &self.transitions {
            if row.len() != na {
                return bad("every state needs the same number of actions".into());
            }
            for outcomes in row {
                let total: f64 = outcomes.iter().map(|o| o.1).sum();
                if outcomes.iter().any(|&(s, p)| s >= ns || !(p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
                    return bad("transition rows must be distributions over known states".into());
                }
            }
        }
        Ok(())
    }

    fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        let mut u = rng.random::<f64>();
        for &(next, p) in &self.transitions[s][a] {
            if u < p {
                return next;
            }
            u -= p;
        }
        self.transitions[s][a].last().expect("non-empty outcome list").0
    }
}

fn max_row(q: &[f64]) -> f64 {
    q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Optimal action values by Bellman iteration until the update is below `tol`.
pub fn value_iteration(mdp: &SmallMdp, tol: f64) -> Result<Vec<Vec<f64>>, AgentError> {
    mdp.validate()?;
    let mut q = vec![vec![0.0; mdp.n_actions()]; mdp.n_states()];
    loop {
        let v: Vec<f64> = q.iter().map(|r| max_row(r)).collect();
        let mut delta: f64 = 0.0;
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let next = mdp.rewards[s][a] + mdp.gamma * mdp.transitions[s][a].iter().map(|&(n, p)| p * v[n]).sum::<f64>();
                delta = delta.max((next - q[s][a]).abs());
                q[s][a] = next;
            }
        }
        if delta < tol {
            return Ok(q);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CqlConfig {
    pub updates: usize,
    pub alpha: f64,
    /// When set, the step size for a pair visited `n` times is `alpha / n^decay`.
    pub visit_decay: Option<f64>,
    pub seed: u64,
}

impl Default for CqlConfig {
    fn default() -> Self {
        Self {
            updates: 200_000,
            alpha: 0.5,
            visit_decay: None,
            seed: 0,
        }
    }
}

/// Classical Q-learning `Q(s,a) <- Q(s,a) + alpha [r + gamma max Q(s',.) - Q(s,a)]`
/// on uniformly drawn state-action pairs.
pub fn tabular_cql(mdp: &SmallMdp, config: &CqlConfig) -> Result<Vec<Vec<f64>>, AgentError> {
    mdp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut q = vec![vec![0.0; na]; ns];
    let mut visits = vec![vec![0u64; na]; ns];
    for _ in 0..config.updates {
        let s = rng.random_range(0..ns);
        let a = rng.random_range(0..na);
        let next = mdp.sample_next(s, a, &mut rng);
        visits[s][a] += 1;
        let alpha = match config.visit_decay {
            Some(w) => config.alpha / (visits[s][a] as f64).powf(w),
            None => config.alpha,
        };
        let target = mdp.rewards[s][a] + mdp.gamma * max_row(&q[next]);
        q[s][a] += alpha * (target - q[s][a]);
    }
    Ok(q)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdqlOracleConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub updates: usize,
    pub batch_size: usize,
    pub copy_every: usize,
    pub buffer_capacity: usize,
    pub seed: u64,
}

impl Default for DdqlOracleConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            learning_rate: 1e-4,
            updates: 40_000,
            batch_size: 32,
            copy_every: 200,
            buffer_capacity: 10_000,
            seed: 0,
        }
    }
}

fn one_hot(s: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[s] = 1.0;
    v
}

/// The DDQL update rules on a small MDP with one-hot states and uniform
/// exploration. Returns the learned Q table.
pub fn ddql_on_mdp(mdp: &SmallMdp, config: &DdqlOracleConfig) -> Result<Vec<Vec<f64>>, AgentError> {
    mdp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut qnet = DenseStack::new(&[ns, config.hidden, config.hidden, na], Activation::Relu, Activation::Linear, &mut rng);
    let mut target = qnet.clone();
    let mut opt = RmsProp::new(RmsPropConfig::with_learning_rate(config.learning_rate), &qnet);
    let mut buffer = RingBuffer::new(config.buffer_capacity);
    let all = vec![true; na];
    for step in 0..config.updates {
        let s = rng.random_range(0..ns);
        let a = rng.random_range(0..na);
        let next = mdp.sample_next(s, a, &mut rng);
        buffer.push(Transition {
            state: one_hot(s, ns),
            action: a,
            reward: mdp.rewards[s][a],
            next_state: one_hot(next, ns),
            next_mask: all.clone(),
            terminal: false,
        });
        if buffer.len() >= config.batch_size {
            let batch = buffer.sample(config.batch_size, &mut rng);
            let targets = td_targets(&batch, &target, mdp.gamma, true)?;
            update_q(&mut qnet, &mut opt, &batch, &targets)?;
        }
        if (step + 1) % config.copy_every == 0 {
            sync_target(&qnet, &mut target);
        }
    }
    (0..ns).map(|s| Ok(qnet.predict(&one_hot(s, ns))?)).collect()
}
