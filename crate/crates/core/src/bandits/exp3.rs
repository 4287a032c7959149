use rand::RngCore;

use super::BanditPolicy;
use crate::envs::Feedback;
use crate::error::{Error, Result};
use crate::rng::sample_discrete;

/// `p_i = (1−γ) w_i/Σw + γ/K`.
pub fn exp3_probabilities(weights: &[f64], gamma: f64) -> Vec<f64> {
    let k = weights.len() as f64;
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| (1.0 - gamma) * w / total + gamma / k).collect()
}

/// Multiply the chosen weight by `exp(γ (r/p_chosen)/K)`, `p` taken from
/// the current weights. Returns the new weights and the probabilities they
/// induce.
pub fn exp3_update(weights: &[f64], arm: usize, reward: f64, gamma: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..=1.0).contains(&reward) {
        return Err(Error::Contract(format!("Exp3 reward {reward} outside [0,1]")));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Contract(format!("Exp3 gamma {gamma} outside (0,1]")));
    }
    if arm >= weights.len() {
        return Err(Error::Contract(format!("arm {arm} out of range")));
    }
    let k = weights.len() as f64;
    let p = exp3_probabilities(weights, gamma);
    let mut w = weights.to_vec();
    w[arm] *= (gamma * (reward / p[arm]) / k).exp();
    let probs = exp3_probabilities(&w, gamma);
    Ok((w, probs))
}

/// Exp3 for oblivious adversarial rewards in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Exp3Policy {
    pub gamma: f64,
    weights: Vec<f64>,
    probs: Vec<f64>,
}

impl Exp3Policy {
    pub fn new(n_arms: usize, gamma: f64) -> Result<Self> {
        if n_arms == 0 {
            return Err(Error::Contract("a policy needs at least one arm".into()));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Contract(format!("Exp3 gamma {gamma} outside (0,1]")));
        }
        Ok(Self {
            gamma,
            weights: vec![1.0; n_arms],
            probs: vec![1.0 / n_arms as f64; n_arms],
        })
    }

    /// `γ = min(1, sqrt(K ln K / ((e−1) h)))`.
    pub fn tuned_gamma(n_arms: usize, horizon: usize) -> f64 {
        let k = n_arms.max(2) as f64;
        (k * k.ln() / ((std::f64::consts::E - 1.0) * horizon.max(1) as f64))
            .sqrt()
            .min(1.0)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }
}

impl BanditPolicy for Exp3Policy {
    fn n_arms(&self) -> usize {
        self.weights.len()
    }

    fn select(&mut self, _t: usize, rng: &mut dyn RngCore) -> usize {
        sample_discrete(&self.probs, rng)
    }

    fn update(&mut self, arm: usize, feedback: &Feedback) -> Result<()> {
        let (mut w, _) = exp3_update(&self.weights, arm, feedback.reward, self.gamma)?;
        // rescaling leaves the probabilities unchanged and prevents overflow
        let max = w.iter().cloned().fold(0.0, f64::max);
        w.iter_mut().for_each(|x| *x /= max);
        self.probs = exp3_probabilities(&w, self.gamma);
        self.weights = w;
        Ok(())
    }

    fn last_probabilities(&self) -> Option<&[f64]> {
        Some(&self.probs)
    }
}
