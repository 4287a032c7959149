use serde::{Deserialize, Serialize};

use super::markov::{check_stochastic, stationary_distribution};
use super::{BanditEnv, Feedback, Oracle};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, sample_discrete, stream, SimRng};

/// Occupancy and quality state of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelState {
    Busy = 0,
    FreeLow = 1,
    FreeHigh = 2,
}

impl ChannelState {
    pub const ALL: [ChannelState; 3] = [ChannelState::Busy, ChannelState::FreeLow, ChannelState::FreeHigh];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn is_free(self) -> bool {
        self != ChannelState::Busy
    }
}

/// What colliding users receive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionRule {
    /// Every user on a shared channel gets reward 0.
    #[default]
    AllLose,
}

/// Restless multi-channel environment with three-state channels
/// `busy / free_low / free_high`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GilbertElliotQualityConfig {
    /// One 3×3 row-stochastic matrix per channel, states ordered
    /// busy, free_low, free_high.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// Data rate `[f(free_low), f(free_high)]` per channel; `f(busy) = 0`.
    pub rates: Vec<[f64; 2]>,
    #[serde(default = "one")]
    pub n_users: usize,
    #[serde(default)]
    pub collision_rule: CollisionRule,
    /// Initial channel states; drawn from each chain's stationary law when
    /// absent (uniformly if the chain has none).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_states: Option<Vec<ChannelState>>,
}

fn one() -> usize {
    1
}

impl GilbertElliotQualityConfig {
    /// Two-state busy/free channel embedded in the three-state model:
    /// `p_bf = P(busy → free)`, `p_fb = P(free → busy)`, free means
    /// `free_high` with rate 1.
    pub fn two_state(channels: &[(f64, f64)], n_users: usize) -> Self {
        let transitions = channels
            .iter()
            .map(|&(p_bf, p_fb)| {
                vec![
                    vec![1.0 - p_bf, 0.0, p_bf],
                    vec![p_fb, 0.0, 1.0 - p_fb],
                    vec![p_fb, 0.0, 1.0 - p_fb],
                ]
            })
            .collect();
        Self {
            transitions,
            rates: vec![[1.0, 1.0]; channels.len()],
            n_users,
            collision_rule: CollisionRule::AllLose,
            initial_states: None,
        }
    }

    pub fn n_channels(&self) -> usize {
        self.transitions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_channels();
        if k == 0 {
            return Err(Error::InvalidModel("transitions: at least one channel required".into()));
        }
        for (j, m) in self.transitions.iter().enumerate() {
            check_stochastic(m, 3, &format!("transitions[{j}]"))?;
        }
        if self.rates.len() != k {
            return Err(Error::InvalidModel(format!(
                "rates has {} entries, expected {k}",
                self.rates.len()
            )));
        }
        if let Some(j) = self
            .rates
            .iter()
            .position(|r| r.iter().any(|x| !(0.0..=1.0).contains(x)))
        {
            return Err(Error::InvalidModel(format!("rates[{j}] outside [0,1]")));
        }
        if self.n_users == 0 || self.n_users > k {
            return Err(Error::InvalidModel(format!(
                "n_users {} must be in 1..={k}",
                self.n_users
            )));
        }
        if let Some(init) = &self.initial_states {
            if init.len() != k {
                return Err(Error::InvalidModel(format!(
                    "initial_states has {} entries, expected {k}",
                    init.len()
                )));
            }
        }
        Ok(())
    }

    /// Stationary state distribution of channel `j`, if unique.
    pub fn stationary(&self, j: usize) -> Option<Vec<f64>> {
        stationary_distribution(&self.transitions[j]).ok()
    }

    /// Long-run mean reward of each channel for a sole user.
    pub fn stationary_means(&self) -> Result<Vec<f64>> {
        (0..self.n_channels())
            .map(|j| {
                let pi = stationary_distribution(&self.transitions[j])?;
                Ok(pi[1] * self.rates[j][0] + pi[2] * self.rates[j][1])
            })
            .collect()
    }

    fn rate(&self, j: usize, state: ChannelState) -> f64 {
        match state {
            ChannelState::Busy => 0.0,
            ChannelState::FreeLow => self.rates[j][0],
            ChannelState::FreeHigh => self.rates[j][1],
        }
    }
}

/// What one user sees in one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserOutcome {
    pub channel: usize,
    /// New state of the sensed channel.
    pub state: ChannelState,
    /// Data rate of the sensed state, earned only without collision.
    pub rate: f64,
    pub reward: f64,
    pub collided: bool,
}

/// Every channel advances on its own random stream, derived from the reset
/// seed by channel index, so channel trajectories do not depend on which
/// channels are sensed.
#[derive(Debug, Clone)]
pub struct GilbertElliotEnv {
    config: GilbertElliotQualityConfig,
    rngs: Vec<SimRng>,
    states: Vec<ChannelState>,
}

impl GilbertElliotEnv {
    pub fn new(config: &GilbertElliotQualityConfig) -> Result<Self> {
        config.validate()?;
        let mut env = Self {
            config: config.clone(),
            rngs: Vec::new(),
            states: Vec::new(),
        };
        BanditEnv::reset(&mut env, 0);
        Ok(env)
    }

    pub fn config(&self) -> &GilbertElliotQualityConfig {
        &self.config
    }

    pub fn n_users(&self) -> usize {
        self.config.n_users
    }

    pub fn channel_states(&self) -> &[ChannelState] {
        &self.states
    }

    /// Advance every channel one step.
    pub fn advance(&mut self) {
        for (j, (state, rng)) in self.states.iter_mut().zip(&mut self.rngs).enumerate() {
            let row = &self.config.transitions[j][state.index()];
            *state = ChannelState::from_index(sample_discrete(row, rng));
        }
    }

    /// One lock-step round: all channels advance, then each user senses its
    /// chosen channel. A sole user on a free channel earns its data rate.
    pub fn step_users(&mut self, choices: &[usize]) -> Result<Vec<UserOutcome>> {
        let k = self.states.len();
        if choices.len() != self.config.n_users {
            return Err(Error::InvalidAction(format!(
                "expected {} choices, got {}",
                self.config.n_users,
                choices.len()
            )));
        }
        if let Some(&c) = choices.iter().find(|&&c| c >= k) {
            return Err(Error::InvalidAction(format!("channel {c} out of range")));
        }
        self.advance();
        let outcomes = choices
            .iter()
            .map(|&c| {
                let state = self.states[c];
                let collided = choices.iter().filter(|&&o| o == c).count() > 1;
                let rate = self.config.rate(c, state);
                let reward = match (collided, self.config.collision_rule) {
                    (true, CollisionRule::AllLose) => 0.0,
                    (false, _) => rate,
                };
                UserOutcome {
                    channel: c,
                    state,
                    rate,
                    reward,
                    collided,
                }
            })
            .collect();
        Ok(outcomes)
    }
}

impl BanditEnv for GilbertElliotEnv {
    fn n_arms(&self) -> usize {
        self.config.n_channels()
    }

    fn reset(&mut self, seed: u64) {
        let k = self.config.n_channels();
        self.rngs = (0..k).map(|j| stream(derive_seed(seed, j as u64))).collect();
        self.states = (0..k)
            .map(|j| match &self.config.initial_states {
                Some(init) => init[j],
                None => {
                    let pi = self.config.stationary(j).unwrap_or_else(|| vec![1.0 / 3.0; 3]);
                    ChannelState::from_index(sample_discrete(&pi, &mut self.rngs[j]))
                }
            })
            .collect();
    }

    /// Single-user view: the other users, if any, are idle.
    fn pull(&mut self, arm: usize) -> Result<Feedback> {
        if arm >= self.states.len() {
            return Err(Error::InvalidAction(format!("channel {arm} out of range")));
        }
        self.advance();
        let state = self.states[arm];
        let reward = self.config.rate(arm, state);
        Ok(Feedback {
            reward,
            available: state.is_free(),
            quality: reward,
            observation: state.index(),
        })
    }

    fn oracle(&self) -> Oracle {
        Oracle::Means(self.config.stationary_means().unwrap_or_else(|_| {
            (0..self.config.n_channels())
                .map(|j| self.config.rate(j, self.states[j]))
                .collect()
        }))
    }
}
