use serde::{Deserialize, Serialize};

use super::{BanditEnv, Feedback, Oracle};
use crate::error::{Error, Result};

/// Oblivious adversary: a reward sequence fixed before play.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarialSeqConfig {
    /// Rewards in `[0,1]`, indexed `[arm][round]`.
    pub rewards: Vec<Vec<f64>>,
}

impl AdversarialSeqConfig {
    /// Two arms alternating between 1 and 0, arm 0 first. Arm 0 additionally
    /// drifts upward: `r_0(t) = (1−δ)·1{t even} + δ·t/(h−1)` and
    /// `r_1(t) = (1−δ)·1{t odd}`.
    pub fn alternating_with_drift(horizon: usize, drift: f64) -> Result<Self> {
        if horizon == 0 || !(0.0..=1.0).contains(&drift) {
            return Err(Error::InvalidModel(format!(
                "alternating sequence needs horizon ≥ 1 and drift in [0,1], got {horizon}, {drift}"
            )));
        }
        let span = (horizon.max(2) - 1) as f64;
        let mut rewards = vec![Vec::with_capacity(horizon), Vec::with_capacity(horizon)];
        for t in 0..horizon {
            let even = if t % 2 == 0 { 1.0 } else { 0.0 };
            rewards[0].push((1.0 - drift) * even + drift * t as f64 / span);
            rewards[1].push((1.0 - drift) * (1.0 - even));
        }
        Ok(Self { rewards })
    }

    pub fn horizon(&self) -> usize {
        self.rewards.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.horizon();
        if self.rewards.is_empty() || h == 0 {
            return Err(Error::InvalidModel("rewards: need at least one arm and one round".into()));
        }
        for (i, row) in self.rewards.iter().enumerate() {
            if row.len() != h {
                return Err(Error::InvalidModel(format!(
                    "rewards[{i}] has {} rounds, expected {h}",
                    row.len()
                )));
            }
            if let Some(t) = row.iter().position(|r| !(0.0..=1.0).contains(r)) {
                return Err(Error::InvalidModel(format!("rewards[{i}][{t}] outside [0,1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AdversarialEnv {
    rewards: Vec<Vec<f64>>,
    t: usize,
}

impl AdversarialEnv {
    pub fn new(config: &AdversarialSeqConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            rewards: config.rewards.clone(),
            t: 0,
        })
    }

    pub fn horizon(&self) -> usize {
        self.rewards[0].len()
    }

    /// Total reward of the best single arm in hindsight.
    pub fn best_arm_total(&self) -> f64 {
        self.rewards
            .iter()
            .map(|row| row.iter().sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl BanditEnv for AdversarialEnv {
    fn n_arms(&self) -> usize {
        self.rewards.len()
    }

    fn reset(&mut self, _seed: u64) {
        self.t = 0;
    }

    fn pull(&mut self, arm: usize) -> Result<Feedback> {
        if arm >= self.rewards.len() {
            return Err(Error::InvalidAction(format!("arm {arm} out of range")));
        }
        if self.t >= self.horizon() {
            return Err(Error::HorizonExhausted {
                horizon: self.horizon(),
            });
        }
        let reward = self.rewards[arm][self.t];
        self.t += 1;
        Ok(Feedback {
            reward,
            available: reward > 0.0,
            quality: reward,
            observation: 0,
        })
    }

    fn oracle(&self) -> Oracle {
        Oracle::Sequence(self.rewards.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternating_best_arm_total() {
        let cfg = AdversarialSeqConfig::alternating_with_drift(10, 0.0).unwrap();
        let env = AdversarialEnv::new(&cfg).unwrap();
        assert_eq!(env.best_arm_total(), 5.0);
    }

    #[test]
    fn horizon_exhausted() {
        let mut env = AdversarialEnv::new(&AdversarialSeqConfig {
            rewards: vec![vec![0.5, 0.5]],
        })
        .unwrap();
        env.reset(0);
        env.pull(0).unwrap();
        env.pull(0).unwrap();
        assert!(matches!(env.pull(0), Err(Error::HorizonExhausted { horizon: 2 })));
    }

    #[test]
    fn ragged_rows_rejected() {
        let cfg = AdversarialSeqConfig {
            rewards: vec![vec![0.5, 0.5], vec![0.5]],
        };
        assert!(cfg.validate().is_err());
    }
}
