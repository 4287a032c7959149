//! Regenerative cycle algorithm for restless Markovian arms.
//!
//! Samples of the current arm are kept only between a visit to the arm's
//! regenerative state `ξ_k` and the next one. Each such block is i.i.d.
//! across blocks, which restores the guarantees of the wrapped index rule.

use rand::RngCore;

use super::{ArmStats, BanditPolicy, IndexRule};
use crate::envs::Feedback;
use crate::error::{Error, Result};
use crate::mdp::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Waiting for the first visit to `ξ_k`; samples are discarded.
    Seeking,
    /// Inside a block; samples are buffered.
    Recording,
    /// The block just closed and the next arm has been chosen.
    Done,
}

/// Decision after one observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcaAction {
    Stay,
    Switch(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RcaState {
    pub regenerative: Vec<usize>,
    pub current: usize,
    pub phase: Phase,
    /// Statistics over completed blocks only.
    pub stats: Vec<ArmStats>,
    pub blocks: Vec<u64>,
    pub recorded: u64,
    pub discarded: u64,
    buffer: Vec<Feedback>,
}

impl RcaState {
    pub fn new(regenerative: Vec<usize>) -> Result<Self> {
        let k = regenerative.len();
        if k == 0 {
            return Err(Error::Contract("at least one arm required".into()));
        }
        Ok(Self {
            regenerative,
            current: 0,
            phase: Phase::Seeking,
            stats: vec![ArmStats::default(); k],
            blocks: vec![0; k],
            recorded: 0,
            discarded: 0,
            buffer: Vec::new(),
        })
    }

    /// Total observations seen so far.
    pub fn observations(&self) -> u64 {
        self.recorded + self.discarded
    }

    /// Process one observation of the current arm.
    ///
    /// The observation that closes a block is discarded rather than opening
    /// the next one.
    pub fn step(&mut self, rule: &IndexRule, feedback: &Feedback) -> Result<RcaAction> {
        if self.phase == Phase::Done {
            self.phase = Phase::Seeking;
        }
        let hit = feedback.observation == self.regenerative[self.current];
        match (self.phase, hit) {
            (Phase::Seeking, false) => {
                self.discarded += 1;
                Ok(RcaAction::Stay)
            }
            (Phase::Seeking, true) | (Phase::Recording, false) => {
                self.recorded += 1;
                self.buffer.push(*feedback);
                self.phase = Phase::Recording;
                Ok(RcaAction::Stay)
            }
            (Phase::Recording, true) => {
                self.discarded += 1;
                let arm = self.current;
                for fb in self.buffer.drain(..) {
                    self.stats[arm].record(&fb);
                }
                self.blocks[arm] += 1;
                self.phase = Phase::Done;
                let next = self.next_arm(rule)?;
                self.current = next;
                Ok(if next == arm {
                    RcaAction::Stay
                } else {
                    RcaAction::Switch(next)
                })
            }
            (Phase::Done, _) => unreachable!("phase reset above"),
        }
    }

    /// Arms without a completed block first, then the wrapped index over
    /// recorded samples.
    fn next_arm(&self, rule: &IndexRule) -> Result<usize> {
        if let Some(a) = self.blocks.iter().position(|&b| b == 0) {
            return Ok(a);
        }
        let t: u64 = self.stats.iter().map(|s| s.pulls).sum();
        Ok(argmax(&rule.indices(&self.stats, t as f64)?))
    }
}

/// [`RcaState`] driven through the [`BanditPolicy`] interface; the
/// feedback's `observation` is the arm's chain state.
#[derive(Debug, Clone, PartialEq)]
pub struct RcaPolicy {
    pub rule: IndexRule,
    pub state: RcaState,
}

impl RcaPolicy {
    pub fn new(rule: IndexRule, regenerative: Vec<usize>) -> Result<Self> {
        Ok(Self {
            rule,
            state: RcaState::new(regenerative)?,
        })
    }
}

impl BanditPolicy for RcaPolicy {
    fn n_arms(&self) -> usize {
        self.state.regenerative.len()
    }

    fn select(&mut self, _t: usize, _rng: &mut dyn RngCore) -> usize {
        self.state.current
    }

    fn update(&mut self, arm: usize, feedback: &Feedback) -> Result<()> {
        if arm != self.state.current {
            return Err(Error::Contract(format!(
                "RCA is sensing arm {} but received feedback for arm {arm}",
                self.state.current
            )));
        }
        self.state.step(&self.rule, feedback)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(state: usize, reward: f64) -> Feedback {
        Feedback {
            reward,
            available: reward > 0.0,
            quality: reward,
            observation: state,
        }
    }

    #[test]
    fn frozen_chain_gives_unit_blocks() {
        let mut rca = RcaState::new(vec![1, 1]).unwrap();
        let rule = IndexRule::Ucb1;
        assert_eq!(rca.step(&rule, &obs(1, 1.0)).unwrap(), RcaAction::Stay);
        assert_eq!(rca.step(&rule, &obs(1, 1.0)).unwrap(), RcaAction::Switch(1));
        assert_eq!(rca.stats[0].pulls, 1);
        assert_eq!(rca.blocks[0], 1);
        assert_eq!((rca.recorded, rca.discarded), (1, 1));
    }

    #[test]
    fn seeking_discards_until_regenerative_state() {
        let mut rca = RcaState::new(vec![2, 2]).unwrap();
        let rule = IndexRule::Ucb1;
        for s in [0, 1, 0] {
            rca.step(&rule, &obs(s, 0.0)).unwrap();
        }
        assert_eq!((rca.recorded, rca.discarded, rca.phase), (0, 3, Phase::Seeking));
        rca.step(&rule, &obs(2, 1.0)).unwrap();
        rca.step(&rule, &obs(0, 0.0)).unwrap();
        assert_eq!(rca.stats[0].pulls, 0, "open block not yet committed");
        rca.step(&rule, &obs(2, 1.0)).unwrap();
        assert_eq!(rca.stats[0].pulls, 2);
        assert_eq!(rca.stats[0].reward_sum, 1.0);
        assert_eq!(rca.observations(), 6);
    }
}
