//! Battery-augmented smart-meter environment.
//!
//! The state at step `t` is the battery charge fraction and the household
//! demand. An action is a charge (positive) or discharge (negative) rate taken
//! from a uniform grid; the grid then sees `z = y + b`.

mod config;

pub use config::{BatteryConfig, EnvConfig, TariffBand, TariffSchedule};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack allowed against accumulated floating-point drift.
pub const DRIFT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid tariff schedule: {0}")]
    ScheduleInvalid(String),
    #[error("infeasible action {rate_kw} kW at step {t}: violates {bound}")]
    Infeasible { t: usize, rate_kw: f64, bound: &'static str },
    #[error("load episode has {actual} steps, expected {expected}")]
    EpisodeLength { expected: usize, actual: usize },
    #[error("policy chose action index {0}, which is masked or off the grid")]
    BadPolicyChoice(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// 1-based step index.
    pub t: usize,
    pub level: f64,
    pub demand_kw: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub rate_kw: f64,
}

/// One day of household demand, optionally with occupancy labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadEpisode {
    pub demand_kw: Vec<f64>,
    pub occupancy: Option<Vec<bool>>,
    /// Free-form origin tag (date, house, synthetic index).
    pub label: String,
}

impl LoadEpisode {
    pub fn len(&self) -> usize {
        self.demand_kw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demand_kw.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub demand_kw: Vec<f64>,
    pub grid_kw: Vec<f64>,
    pub rate_kw: Vec<f64>,
    /// Charge fractions, `T + 1` long (includes the level after the last step).
    pub levels: Vec<f64>,
    /// Per-step cost signal `dt * h_t * |b_t|`.
    pub cost_signal: Vec<f64>,
    pub occupancy: Option<Vec<bool>>,
}

/// Chooses an action index given the current state and feasibility mask.
pub trait Policy {
    fn select(&mut self, state: &EnvState, mask: &[bool], rng: &mut dyn RngCore) -> usize;
}

impl<F> Policy for F
where
    F: FnMut(&EnvState, &[bool], &mut dyn RngCore) -> usize,
{
    fn select(&mut self, state: &EnvState, mask: &[bool], rng: &mut dyn RngCore) -> usize {
        self(state, mask, rng)
    }
}

/// Environment parameters bundled with the precomputed action grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    pub config: EnvConfig,
    pub battery: BatteryConfig,
    pub tariff: TariffSchedule,
    actions: Vec<Action>,
    zero_index: usize,
}

/// `n_actions` equally spaced rates spanning `[b_min, b_max]`; one of them
/// must be exactly 0 kW.
pub fn action_grid(config: &EnvConfig, battery: &BatteryConfig) -> Result<Vec<Action>, EnvError> {
    config.validate(battery)?;
    battery.validate()?;
    let n = config.n_actions;
    let (lo, hi) = (battery.rate_min_kw, battery.rate_max_kw);
    let step = (hi - lo) / (n - 1) as f64;
    let mut actions: Vec<Action> = (0..n)
        .map(|i| Action {
            rate_kw: if i == n - 1 { hi } else { lo + i as f64 * step },
        })
        .collect();
    let zero = zero_index(&actions);
    if actions[zero].rate_kw.abs() > 1e-9 * step {
        return Err(EnvError::InvalidConfig(format!(
            "action grid over [{lo}, {hi}] with {n} points does not contain 0 kW"
        )));
    }
    actions[zero].rate_kw = 0.0;
    Ok(actions)
}

fn zero_index(actions: &[Action]) -> usize {
    actions
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.rate_kw.abs().total_cmp(&b.1.rate_kw.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

impl Environment {
    pub fn new(config: EnvConfig, battery: BatteryConfig, tariff: TariffSchedule) -> Result<Self, EnvError> {
        tariff.validate()?;
        let actions = action_grid(&config, &battery)?;
        let zero_index = zero_index(&actions);
        Ok(Self {
            config,
            battery,
            tariff,
            actions,
            zero_index,
        })
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn zero_action(&self) -> usize {
        self.zero_index
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    pub fn initial_state(&self, demand_kw: f64) -> EnvState {
        EnvState {
            t: 1,
            level: self.config.initial_level,
            demand_kw,
        }
    }

    fn violated_bound(&self, state: &EnvState, rate_kw: f64) -> Option<&'static str> {
        let next = state.level + self.battery.level_delta(rate_kw, self.config.delta_t);
        if next > self.battery.level_max + DRIFT_TOLERANCE {
            Some("battery level upper bound")
        } else if next < self.battery.level_min - DRIFT_TOLERANCE {
            Some("battery level lower bound")
        } else if self.config.enforce_nonneg_grid && state.demand_kw + rate_kw < -DRIFT_TOLERANCE {
            Some("non-negative grid load")
        } else if rate_kw > self.battery.rate_max_kw || rate_kw < self.battery.rate_min_kw {
            Some("battery rate bounds")
        } else {
            None
        }
    }

    pub fn feasible_mask(&self, state: &EnvState) -> Vec<bool> {
        self.actions
            .iter()
            .enumerate()
            .map(|(i, a)| i == self.zero_index || self.violated_bound(state, a.rate_kw).is_none())
            .collect()
    }

    /// Applies `action`, returning the next state (observing `next_demand_kw`)
    /// and the grid load of this step.
    pub fn step(&self, state: &EnvState, action: Action, next_demand_kw: f64) -> Result<(EnvState, f64), EnvError> {
        if let Some(bound) = self.violated_bound(state, action.rate_kw) {
            if action.rate_kw != 0.0 {
                return Err(EnvError::Infeasible {
                    t: state.t,
                    rate_kw: action.rate_kw,
                    bound,
                });
            }
        }
        let raw = state.level + self.battery.level_delta(action.rate_kw, self.config.delta_t);
        let level = raw.clamp(self.battery.level_min, self.battery.level_max);
        Ok((
            EnvState {
                t: state.t + 1,
                level,
                demand_kw: next_demand_kw,
            },
            state.demand_kw + action.rate_kw,
        ))
    }

    pub fn price_at(&self, t: usize) -> Result<f64, EnvError> {
        self.tariff.price_at_hour(self.config.clock_hour(t))
    }

    /// Cost signal `dt * h_t * |b|` used in the training reward.
    pub fn cost_signal(&self, action: Action, t: usize) -> Result<f64, EnvError> {
        Ok(self.config.delta_t * self.price_at(t)? * action.rate_kw.abs())
    }

    /// Amount actually billed for a grid-load sequence: `sum dt * h_t * max(z_t, 0)`.
    pub fn billed_cost(&self, grid_kw: &[f64]) -> Result<f64, EnvError> {
        grid_kw
            .iter()
            .enumerate()
            .map(|(i, &z)| Ok(self.config.delta_t * self.price_at(i + 1)? * z.max(0.0)))
            .sum()
    }

    /// Plays `policy` over one load episode from the configured initial level.
    pub fn rollout<P: Policy + ?Sized>(&self, policy: &mut P, episode: &LoadEpisode, rng: &mut dyn RngCore) -> Result<Trajectory, EnvError> {
        let horizon = self.horizon();
        if episode.len() != horizon {
            return Err(EnvError::EpisodeLength {
                expected: horizon,
                actual: episode.len(),
            });
        }
        let y = &episode.demand_kw;
        let mut traj = Trajectory {
            demand_kw: y.clone(),
            grid_kw: Vec::with_capacity(horizon),
            rate_kw: Vec::with_capacity(horizon),
            levels: Vec::with_capacity(horizon + 1),
            cost_signal: Vec::with_capacity(horizon),
            occupancy: episode.occupancy.clone(),
        };
        let mut state = self.initial_state(y[0]);
        traj.levels.push(state.level);
        for i in 0..horizon {
            let mask = self.feasible_mask(&state);
            let a = policy.select(&state, &mask, rng);
            if !mask.get(a).copied().unwrap_or(false) {
                return Err(EnvError::BadPolicyChoice(a));
            }
            let action = self.actions[a];
            let next_y = y.get(i + 1).copied().unwrap_or(0.0);
            let (next, z) = self.step(&state, action, next_y)?;
            traj.cost_signal.push(self.cost_signal(action, state.t)?);
            traj.grid_kw.push(z);
            traj.rate_kw.push(action.rate_kw);
            traj.levels.push(next.level);
            state = next;
        }
        Ok(traj)
    }
}
