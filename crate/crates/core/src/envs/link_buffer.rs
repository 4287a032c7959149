use rand::Rng;
use serde::{Deserialize, Serialize};

use super::markov::{check_probability_vector, check_stochastic};
use super::{DiscreteEnv, StepOutcome};
use crate::error::{Error, Result};
use crate::mdp::FiniteMdp;
use crate::rng::{sample_discrete, stream, SimRng};

/// Largest state space `compile_to_mdp` accepts.
pub const MAX_COMPILED_STATES: usize = 10_000;

/// Point-to-point link with a finite bit buffer, a Markov channel and a
/// discrete set of transmit powers.
///
/// State `(h, b)` is flattened as `h·(B_max+1) + b`; action `(p, β)` as
/// `p_index·(B_max+1) + β`. The per-step cost is the Lagrangian
/// `ℓ = p_on + p_tx/α + λ(η·1{overflow} + b − β·1{success})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkBufferConfig {
    /// Channel-state transition matrix, `|H|×|H|`.
    pub channel_transition: Vec<Vec<f64>>,
    /// Arrival law `P_N(n)` for `n = 0..=N_max`.
    pub arrival_probs: Vec<f64>,
    pub buffer_capacity: usize,
    pub codeword_length: usize,
    /// Transmit powers, ascending, first entry 0 (silence).
    pub power_levels: Vec<f64>,
    pub static_power: f64,
    pub amplifier_efficiency: f64,
    /// Codeword error probability `ε[h][p_index][β]`, `β = 0..=B_max`.
    pub error_prob: Vec<Vec<Vec<f64>>>,
    pub overflow_cost: f64,
    pub lagrange_multiplier: f64,
    pub discount: f64,
}

impl LinkBufferConfig {
    /// Error table from a Rayleigh block-fading outage model: a codeword of
    /// `β` bits over `n_c` channel uses fails when
    /// `log2(1 + p·g_h·|z|²) < β/n_c`, giving
    /// `ε = 1 − exp(−(2^(β/n_c) − 1)/(p·g_h))`. Silence always fails and
    /// `β = 0` never does.
    pub fn outage_error_table(
        channel_gains: &[f64],
        power_levels: &[f64],
        buffer_capacity: usize,
        codeword_length: usize,
    ) -> Vec<Vec<Vec<f64>>> {
        channel_gains
            .iter()
            .map(|&g| {
                power_levels
                    .iter()
                    .map(|&p| {
                        (0..=buffer_capacity)
                            .map(|beta| {
                                if beta == 0 {
                                    0.0
                                } else if p <= 0.0 {
                                    1.0
                                } else {
                                    let snr_needed =
                                        2f64.powf(beta as f64 / codeword_length as f64) - 1.0;
                                    1.0 - (-snr_needed / (p * g)).exp()
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn n_channel_states(&self) -> usize {
        self.channel_transition.len()
    }

    pub fn n_states(&self) -> usize {
        self.n_channel_states() * (self.buffer_capacity + 1)
    }

    pub fn n_actions(&self) -> usize {
        self.power_levels.len() * (self.buffer_capacity + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let nh = self.n_channel_states();
        if nh == 0 {
            return Err(Error::InvalidModel("channel_transition: at least one state required".into()));
        }
        check_stochastic(&self.channel_transition, nh, "channel_transition")?;
        check_probability_vector(&self.arrival_probs, self.arrival_probs.len(), "arrival_probs")?;
        if self.arrival_probs.is_empty() {
            return Err(Error::InvalidModel("arrival_probs: empty".into()));
        }
        if self.codeword_length == 0 {
            return Err(Error::InvalidModel("codeword_length must be positive".into()));
        }
        if self.power_levels.is_empty()
            || self.power_levels[0] < 0.0
            || self.power_levels.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidModel(
                "power_levels must be non-negative and strictly ascending".into(),
            ));
        }
        if self.static_power < 0.0 || !self.static_power.is_finite() {
            return Err(Error::InvalidModel("static_power must be non-negative".into()));
        }
        if !(self.amplifier_efficiency > 0.0 && self.amplifier_efficiency <= 1.0) {
            return Err(Error::InvalidModel("amplifier_efficiency must lie in (0,1]".into()));
        }
        if self.overflow_cost < 0.0 || self.lagrange_multiplier < 0.0 {
            return Err(Error::InvalidModel(
                "overflow_cost and lagrange_multiplier must be non-negative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::InvalidModel(format!("discount {} outside [0,1)", self.discount)));
        }
        let shape_ok = self.error_prob.len() == nh
            && self.error_prob.iter().all(|by_p| {
                by_p.len() == self.power_levels.len()
                    && by_p.iter().all(|by_b| by_b.len() == self.buffer_capacity + 1)
            });
        if !shape_ok {
            return Err(Error::InvalidModel(format!(
                "error_prob must have shape {nh}×{}×{}",
                self.power_levels.len(),
                self.buffer_capacity + 1
            )));
        }
        if self
            .error_prob
            .iter()
            .flatten()
            .flatten()
            .any(|e| !(0.0..=1.0).contains(e))
        {
            return Err(Error::InvalidModel("error_prob entries must lie in [0,1]".into()));
        }
        Ok(())
    }

    pub fn encode_state(&self, h: usize, b: usize) -> usize {
        h * (self.buffer_capacity + 1) + b
    }

    pub fn decode_state(&self, s: usize) -> (usize, usize) {
        (s / (self.buffer_capacity + 1), s % (self.buffer_capacity + 1))
    }

    pub fn encode_action(&self, p_index: usize, beta: usize) -> usize {
        p_index * (self.buffer_capacity + 1) + beta
    }

    pub fn decode_action(&self, a: usize) -> (usize, usize) {
        (a / (self.buffer_capacity + 1), a % (self.buffer_capacity + 1))
    }

    fn power_cost(&self, p_index: usize) -> f64 {
        self.static_power + self.power_levels[p_index] / self.amplifier_efficiency
    }

    /// Next buffer level, overflow flag and Lagrangian cost for one outcome.
    fn outcome(&self, b: usize, p_index: usize, beta: usize, success: bool, arrivals: usize) -> (usize, bool, f64) {
        let sent = if success { beta } else { 0 };
        let pre = b.saturating_sub(sent) + arrivals;
        let overflow = pre > self.buffer_capacity;
        let holding = (b - sent) as f64;
        let wait = if overflow { self.overflow_cost } else { 0.0 } + holding;
        let cost = self.power_cost(p_index) + self.lagrange_multiplier * wait;
        (pre.min(self.buffer_capacity), overflow, cost)
    }

    /// Exact model with rewards `−E[ℓ]`. Actions with `β > b` are clamped to
    /// `β = b`, matching [`LinkBufferEnv`]'s [`DiscreteEnv`] adapter.
    pub fn compile_to_mdp(&self) -> Result<FiniteMdp> {
        self.validate()?;
        let ns = self.n_states();
        if ns > MAX_COMPILED_STATES {
            return Err(Error::TooLarge(format!(
                "link buffer has {ns} states, limit is {MAX_COMPILED_STATES}"
            )));
        }
        let na = self.n_actions();
        let mut transition = vec![vec![vec![0.0; ns]; na]; ns];
        let mut reward = vec![vec![0.0; na]; ns];
        for s in 0..ns {
            let (h, b) = self.decode_state(s);
            for a in 0..na {
                let (p_index, beta_raw) = self.decode_action(a);
                let beta = beta_raw.min(b);
                let eps = self.error_prob[h][p_index][beta];
                let mut expected_cost = 0.0;
                for (success, p_succ) in [(true, 1.0 - eps), (false, eps)] {
                    if p_succ == 0.0 {
                        continue;
                    }
                    for (n, &p_n) in self.arrival_probs.iter().enumerate() {
                        if p_n == 0.0 {
                            continue;
                        }
                        let (b_next, _, cost) = self.outcome(b, p_index, beta, success, n);
                        expected_cost += p_succ * p_n * cost;
                        for (h_next, &p_h) in self.channel_transition[h].iter().enumerate() {
                            transition[s][a][self.encode_state(h_next, b_next)] += p_succ * p_n * p_h;
                        }
                    }
                }
                reward[s][a] = -expected_cost;
            }
        }
        FiniteMdp::new(transition, reward, self.discount)
    }
}

/// Result of one link transmission slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkStep {
    pub next_state: usize,
    pub cost: f64,
    pub success: bool,
    pub overflow: bool,
}

#[derive(Debug, Clone)]
pub struct LinkBufferEnv {
    config: LinkBufferConfig,
    rng: SimRng,
    h: usize,
    b: usize,
}

impl LinkBufferEnv {
    pub fn new(config: &LinkBufferConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            rng: stream(0),
            h: 0,
            b: 0,
        })
    }

    pub fn config(&self) -> &LinkBufferConfig {
        &self.config
    }

    /// Current `(channel state, buffer level)`.
    pub fn channel_and_buffer(&self) -> (usize, usize) {
        (self.h, self.b)
    }

    /// Transmit `beta` bits at power level `p_index`. `beta > b` is rejected.
    pub fn transmit(&mut self, p_index: usize, beta: usize) -> Result<LinkStep> {
        if p_index >= self.config.power_levels.len() {
            return Err(Error::InvalidAction(format!("power level {p_index} out of range")));
        }
        if beta > self.b {
            return Err(Error::InvalidAction(format!(
                "cannot send {beta} bits from a buffer holding {}",
                self.b
            )));
        }
        let eps = self.config.error_prob[self.h][p_index][beta];
        let success = self.rng.random::<f64>() >= eps;
        let arrivals = sample_discrete(&self.config.arrival_probs, &mut self.rng);
        let (b_next, overflow, cost) = self.config.outcome(self.b, p_index, beta, success, arrivals);
        self.h = sample_discrete(&self.config.channel_transition[self.h], &mut self.rng);
        self.b = b_next;
        Ok(LinkStep {
            next_state: self.config.encode_state(self.h, self.b),
            cost,
            success,
            overflow,
        })
    }
}

impl DiscreteEnv for LinkBufferEnv {
    fn n_states(&self) -> usize {
        self.config.n_states()
    }

    fn n_actions(&self) -> usize {
        self.config.n_actions()
    }

    /// Starts from channel state 0 with an empty buffer.
    fn reset(&mut self, seed: u64) -> usize {
        self.rng = stream(seed);
        self.h = 0;
        self.b = 0;
        self.state()
    }

    fn state(&self) -> usize {
        self.config.encode_state(self.h, self.b)
    }

    /// Flattened action; `β` above the buffer level is clamped to it.
    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if action >= self.config.n_actions() {
            return Err(Error::InvalidAction(format!("action {action} out of range")));
        }
        let (p_index, beta) = self.config.decode_action(action);
        let step = self.transmit(p_index, beta.min(self.b))?;
        Ok(StepOutcome {
            next_state: step.next_state,
            reward: -step.cost,
            terminal: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(arrivals: Vec<f64>, eps: f64) -> LinkBufferConfig {
        let b_max = 6;
        LinkBufferConfig {
            channel_transition: vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            arrival_probs: arrivals,
            buffer_capacity: b_max,
            codeword_length: 4,
            power_levels: vec![0.0, 1.0],
            static_power: 0.5,
            amplifier_efficiency: 0.5,
            error_prob: vec![vec![vec![eps; b_max + 1]; 2]; 2],
            overflow_cost: 10.0,
            lagrange_multiplier: 1.0,
            discount: 0.9,
        }
    }

    #[test]
    fn buffer_update_example() {
        let cfg = config(vec![0.0, 0.0, 1.0], 0.0);
        let (b_next, overflow, _) = cfg.outcome(5, 1, 3, true, 2);
        assert_eq!((b_next, overflow), (4, false));
        let (b_next, overflow, cost) = cfg.outcome(6, 1, 0, false, 2);
        assert_eq!((b_next, overflow), (6, true));
        assert_eq!(cost, 0.5 + 2.0 + 10.0 + 6.0);
    }

    #[test]
    fn silence_costs_static_power() {
        let cfg = config(vec![1.0], 0.0);
        let mut env = LinkBufferEnv::new(&cfg).unwrap();
        env.reset(0);
        let step = env.transmit(0, 0).unwrap();
        assert_eq!(step.cost, 0.5);
    }

    #[test]
    fn beta_above_buffer_rejected() {
        let mut env = LinkBufferEnv::new(&config(vec![1.0], 0.0)).unwrap();
        env.reset(0);
        assert!(matches!(env.transmit(1, 1), Err(Error::InvalidAction(_))));
    }

    #[test]
    fn compiled_kernel_is_deterministic_without_randomness() {
        let mut cfg = config(vec![1.0], 0.0);
        cfg.channel_transition = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let mdp = cfg.compile_to_mdp().unwrap();
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let row = mdp.transition_row(s, a);
                assert!(row.iter().all(|&p| p == 0.0 || p == 1.0));
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn outage_table_shape_and_conventions() {
        let t = LinkBufferConfig::outage_error_table(&[0.5, 2.0], &[0.0, 1.0, 4.0], 3, 2);
        assert_eq!(t.len(), 2);
        assert_eq!(t[0][0], vec![0.0, 1.0, 1.0, 1.0]);
        assert!(t[1][2][3] < t[0][2][3]);
        assert!(t[1][1][1] > t[1][2][1]);
    }
}
