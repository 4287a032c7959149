use rand_distr::{Distribution, Normal};

use super::{DiscreteEnv, StepOutcome};
use crate::error::{Error, Result};
use crate::mdp::FiniteMdp;
use crate::rng::{sample_discrete, stream, SimRng};

/// Simulator for a [`FiniteMdp`].
///
/// Rewards are drawn from the model's reward atoms when present, otherwise the
/// expected reward is returned, optionally perturbed by zero-mean Gaussian
/// noise. Entering a state marked terminal ends the episode and the next state
/// is redrawn from the start distribution.
#[derive(Debug, Clone)]
pub struct MdpEnv {
    mdp: FiniteMdp,
    start: Vec<f64>,
    terminal: Vec<bool>,
    noise: Option<Normal<f64>>,
    rng: SimRng,
    state: usize,
}

impl MdpEnv {
    /// Environment starting uniformly at random.
    pub fn new(mdp: FiniteMdp) -> Self {
        let n = mdp.n_states();
        Self {
            start: vec![1.0 / n as f64; n],
            terminal: vec![false; n],
            noise: None,
            rng: stream(0),
            state: 0,
            mdp,
        }
    }

    pub fn with_start_state(mut self, s: usize) -> Result<Self> {
        if s >= self.mdp.n_states() {
            return Err(Error::Contract(format!("start state {s} out of range")));
        }
        self.start = vec![0.0; self.mdp.n_states()];
        self.start[s] = 1.0;
        Ok(self)
    }

    pub fn with_terminal_states(mut self, states: &[usize]) -> Result<Self> {
        for &s in states {
            if s >= self.mdp.n_states() {
                return Err(Error::Contract(format!("terminal state {s} out of range")));
            }
            self.terminal[s] = true;
        }
        Ok(self)
    }

    /// Add zero-mean Gaussian noise with standard deviation `sd` to every
    /// reward drawn from the expected-reward kernel.
    pub fn with_reward_noise(mut self, sd: f64) -> Result<Self> {
        self.noise = Some(
            Normal::new(0.0, sd).map_err(|e| Error::Contract(format!("reward noise: {e}")))?,
        );
        Ok(self)
    }

    pub fn model(&self) -> &FiniteMdp {
        &self.mdp
    }
}

impl DiscreteEnv for MdpEnv {
    fn n_states(&self) -> usize {
        self.mdp.n_states()
    }

    fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    fn reset(&mut self, seed: u64) -> usize {
        self.rng = stream(seed);
        self.state = sample_discrete(&self.start, &mut self.rng);
        self.state
    }

    fn state(&self) -> usize {
        self.state
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if action >= self.mdp.n_actions() {
            return Err(Error::InvalidAction(format!("action {action} out of range")));
        }
        let s = self.state;
        let s_next = sample_discrete(self.mdp.transition_row(s, action), &mut self.rng);
        let reward = match self.mdp.reward_atoms(s, action, s_next) {
            Some(atoms) => {
                let probs: Vec<f64> = atoms.iter().map(|&(_, p)| p).collect();
                atoms[sample_discrete(&probs, &mut self.rng)].0
            }
            None => {
                let r = self.mdp.reward(s, action);
                match &self.noise {
                    Some(n) => r + n.sample(&mut self.rng),
                    None => r,
                }
            }
        };
        let terminal = self.terminal[s_next];
        self.state = if terminal {
            sample_discrete(&self.start, &mut self.rng)
        } else {
            s_next
        };
        Ok(StepOutcome {
            next_state: s_next,
            reward,
            terminal,
        })
    }
}
