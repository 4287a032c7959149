use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BanditEnv, Feedback, Oracle};
use crate::error::{Error, Result};
use crate::rng::{stream, SimRng};

/// Independent channels with Bernoulli acknowledgement feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BernoulliChannelsConfig {
    pub success_probs: Vec<f64>,
}

impl BernoulliChannelsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.success_probs.is_empty() {
            return Err(Error::InvalidModel("success_probs: at least one channel required".into()));
        }
        if let Some((i, p)) = self
            .success_probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::InvalidModel(format!("success_probs[{i}] = {p} outside [0,1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BernoulliChannelsEnv {
    probs: Vec<f64>,
    rng: SimRng,
}

impl BernoulliChannelsEnv {
    pub fn new(config: &BernoulliChannelsConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            probs: config.success_probs.clone(),
            rng: stream(0),
        })
    }

    pub fn success_probs(&self) -> &[f64] {
        &self.probs
    }
}

impl BanditEnv for BernoulliChannelsEnv {
    fn n_arms(&self) -> usize {
        self.probs.len()
    }

    fn reset(&mut self, seed: u64) {
        self.rng = stream(seed);
    }

    fn pull(&mut self, arm: usize) -> Result<Feedback> {
        let p = *self
            .probs
            .get(arm)
            .ok_or_else(|| Error::InvalidAction(format!("channel {arm} out of range")))?;
        let ack = self.rng.random::<f64>() < p;
        let reward = if ack { 1.0 } else { 0.0 };
        Ok(Feedback {
            reward,
            available: ack,
            quality: reward,
            observation: ack as usize,
        })
    }

    fn oracle(&self) -> Oracle {
        Oracle::Means(self.probs.clone())
    }
}
