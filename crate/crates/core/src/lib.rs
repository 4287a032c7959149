//! Reinforcement-learning toolkit and batch simulator for physical-layer
//! wireless decision problems.
//!
//! * [`mdp`]: finite MDPs and exact dynamic programming.
//! * [`tabular`]: Q-learning, SARSA and double Q-learning.
//! * [`pomdp`]: belief tracking and grid-based belief value iteration.
//! * [`linear_fa`]: linear action-value approximation, including the
//!   caching feature model.
//! * [`bandits`]: index policies, Exp3, regenerative cycles, random ranks
//!   and regret analytics.
//! * [`envs`]: the wireless scenarios and a generic MDP simulator.
//! * [`harness`]: configuration-driven experiments with CSV output.

pub mod bandits;
pub mod envs;
pub mod error;
pub mod harness;
pub mod linear_fa;
pub mod mdp;
pub mod pomdp;
pub mod rng;
pub mod tabular;

pub use error::{Error, Result};
