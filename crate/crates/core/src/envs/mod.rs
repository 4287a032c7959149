//! Simulation environments.
//!
//! Two contracts cover every scenario:
//!
//! * [`DiscreteEnv`]: finite state and action spaces, used by the tabular
//!   learners (link buffer, caching, generic MDP).
//! * [`BanditEnv`]: a single decision per round with arm feedback, used by
//!   the bandit policies (Bernoulli channels, Gilbert-Elliot channels, green
//!   networking, adversarial sequences).
//!
//! Every environment owns its random streams and is reseeded by `reset`.
//! Configurations are JSON documents tagged by a `"type"` field, see
//! [`EnvConfig`].

mod adversarial;
mod bernoulli;
mod caching;
mod gilbert_elliot;
mod green_net;
mod link_buffer;
pub mod markov;
mod mdp_env;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use adversarial::{AdversarialEnv, AdversarialSeqConfig};
pub use bernoulli::{BernoulliChannelsConfig, BernoulliChannelsEnv};
pub use caching::{
    enumerate_cache_vectors, zipf_profile, CachingConfig, CachingEnv, CachingStep, PopularityProfile,
};
pub use gilbert_elliot::{
    ChannelState, CollisionRule, GilbertElliotEnv, GilbertElliotQualityConfig, UserOutcome,
};
pub use green_net::{BaseStationSpec, ConfigurationEntry, GreenNetConfig, GreenNetEnv};
pub use link_buffer::{LinkBufferConfig, LinkBufferEnv, LinkStep};
pub use mdp_env::MdpEnv;

/// Result of one step of a [`DiscreteEnv`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: usize,
    pub reward: f64,
    /// `next_state` is absorbing; the environment restarts on its own and
    /// [`DiscreteEnv::state`] reports the restart state.
    pub terminal: bool,
}

/// Environment with finite state and action spaces.
pub trait DiscreteEnv {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Reseed every internal stream and return the initial state.
    fn reset(&mut self, seed: u64) -> usize;
    /// State in which the next action will be taken.
    fn state(&self) -> usize;
    fn step(&mut self, action: usize) -> Result<StepOutcome>;
}

/// Feedback from pulling one arm of a [`BanditEnv`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feedback {
    pub reward: f64,
    /// Whether the arm was observed "available" (free channel, ACK received,
    /// feasible configuration).
    pub available: bool,
    /// Quality rating in `[0,1]`, meaningful only when `available`.
    pub quality: f64,
    /// Raw observation of the arm (channel state, feasibility flag, ...).
    pub observation: usize,
}

/// What the environment knows about the best achievable reward.
#[derive(Debug, Clone, PartialEq)]
pub enum Oracle {
    /// Stationary expected reward per arm.
    Means(Vec<f64>),
    /// Deterministic reward sequence, indexed `[arm][round]`.
    Sequence(Vec<Vec<f64>>),
}

impl Oracle {
    /// Expected reward of `arm` at 0-based round `t`.
    pub fn expected_reward(&self, arm: usize, t: usize) -> f64 {
        match self {
            Oracle::Means(m) => m[arm],
            Oracle::Sequence(r) => r[arm][t],
        }
    }

    /// Best single arm (best stationary mean, or best in hindsight),
    /// lowest index on ties.
    pub fn best_arm(&self) -> usize {
        match self {
            Oracle::Means(m) => crate::mdp::argmax(m),
            Oracle::Sequence(r) => {
                let totals: Vec<f64> = r.iter().map(|row| row.iter().sum()).collect();
                crate::mdp::argmax(&totals)
            }
        }
    }
}

/// Stochastic or adversarial multi-armed environment.
pub trait BanditEnv {
    fn n_arms(&self) -> usize;
    fn reset(&mut self, seed: u64);
    fn pull(&mut self, arm: usize) -> Result<Feedback>;
    fn oracle(&self) -> Oracle;
}

/// Any environment configuration, discriminated by `"type"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    Bernoulli(BernoulliChannelsConfig),
    GilbertElliot(GilbertElliotQualityConfig),
    LinkBuffer(LinkBufferConfig),
    Caching(CachingConfig),
    GreenNet(GreenNetConfig),
    Adversarial(AdversarialSeqConfig),
    Mdp(MdpEnvConfig),
}

impl EnvConfig {
    /// Registered environment ids, in stable order.
    pub const IDS: [&'static str; 7] = [
        "bernoulli",
        "gilbert_elliot",
        "link_buffer",
        "caching",
        "green_net",
        "adversarial",
        "mdp",
    ];

    pub fn id(&self) -> &'static str {
        match self {
            EnvConfig::Bernoulli(_) => "bernoulli",
            EnvConfig::GilbertElliot(_) => "gilbert_elliot",
            EnvConfig::LinkBuffer(_) => "link_buffer",
            EnvConfig::Caching(_) => "caching",
            EnvConfig::GreenNet(_) => "green_net",
            EnvConfig::Adversarial(_) => "adversarial",
            EnvConfig::Mdp(_) => "mdp",
        }
    }

    /// Short description of each environment id.
    pub fn describe(id: &str) -> &'static str {
        match id {
            "bernoulli" => "independent Bernoulli channels (ACK feedback)",
            "gilbert_elliot" => "restless busy/low/high quality channels, multi-user",
            "link_buffer" => "power/buffer point-to-point link with Lagrangian cost",
            "caching" => "base-station caching under Markov popularity",
            "green_net" => "base-station on/off switching for energy efficiency",
            "adversarial" => "preloaded oblivious reward sequence",
            "mdp" => "generic finite MDP given as a JSON model",
            _ => "",
        }
    }

    /// Whether agents see this environment as a bandit (vs. an MDP).
    pub fn is_bandit(&self) -> bool {
        matches!(
            self,
            EnvConfig::Bernoulli(_)
                | EnvConfig::GilbertElliot(_)
                | EnvConfig::GreenNet(_)
                | EnvConfig::Adversarial(_)
        )
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvConfig::Bernoulli(c) => c.validate(),
            EnvConfig::GilbertElliot(c) => c.validate(),
            EnvConfig::LinkBuffer(c) => c.validate(),
            EnvConfig::Caching(c) => c.validate(),
            EnvConfig::GreenNet(c) => c.validate(),
            EnvConfig::Adversarial(c) => c.validate(),
            EnvConfig::Mdp(c) => c.validate(),
        }
    }
}

/// Generic finite MDP environment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpEnvConfig {
    pub model: crate::mdp::FiniteMdp,
    /// Start state; uniform over states when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_state: Option<usize>,
}

impl MdpEnvConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.start_state {
            if s >= self.model.n_states() {
                return Err(crate::error::Error::InvalidModel(format!(
                    "start_state {s} out of range"
                )));
            }
        }
        Ok(())
    }
}

/// One row of an environment trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: usize,
    pub actor: usize,
    pub action: usize,
    pub state_or_obs: usize,
    pub reward: f64,
    /// Semicolon-separated flags (`collided`, `overflow`, `terminal`, ...).
    pub info: String,
}

/// Write trace rows as CSV with header
/// `t,actor,action,state_or_obs,reward,info`.
pub fn write_trace_csv<W: Write>(out: W, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record(["t", "actor", "action", "state_or_obs", "reward", "info"])?;
    }
    w.flush()?;
    Ok(())
}
