//! Model-free tabular learners: Q-learning, SARSA and double Q-learning.
//!
//! All three share the incremental rule
//! `q(s,a) ← q(s,a) + α (target − q(s,a))` and differ only in the target.
//! Continuation terms are multiplied by `(1 − terminal)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::DiscreteEnv;
use crate::error::{Error, Result};
use crate::mdp::{argmax, QTable};
use crate::rng::SimRng;

/// Step-size sequence `α_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearningRateSchedule {
    /// `α_t = c0`.
    Constant { c0: f64 },
    /// `α_t = 1/(t+1)`.
    Harmonic,
    /// `α_t = c0 (t+1)^(−omega)`, `omega ∈ (0.5, 1]`.
    Power { c0: f64, omega: f64 },
}

impl LearningRateSchedule {
    pub fn rate(&self, t: u64) -> f64 {
        match *self {
            LearningRateSchedule::Constant { c0 } => c0,
            LearningRateSchedule::Harmonic => 1.0 / (t as f64 + 1.0),
            LearningRateSchedule::Power { c0, omega } => c0 * (t as f64 + 1.0).powf(-omega),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LearningRateSchedule::Constant { c0 } if !(c0 > 0.0 && c0 <= 1.0) => {
                Err(Error::Contract(format!("constant rate {c0} outside (0,1]")))
            }
            LearningRateSchedule::Power { c0, omega }
                if !(c0 > 0.0 && c0 <= 1.0) || !(omega > 0.5 && omega <= 1.0) =>
            {
                Err(Error::Contract(format!(
                    "power schedule needs c0 in (0,1] and omega in (0.5,1], got {c0}, {omega}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Which counter indexes the learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateClock {
    /// Global step counter `t`.
    #[default]
    Global,
    /// Number of earlier updates of the same `(s,a)` pair.
    PerPair,
}

/// Exploration probability `ε(t)` for ε-greedy selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExplorationSchedule {
    ConstantEpsilon { eps0: f64 },
    /// Linear interpolation from `eps0` to `eps_min` over `decay_steps`, then flat.
    LinearDecay {
        eps0: f64,
        eps_min: f64,
        decay_steps: u64,
    },
}

impl ExplorationSchedule {
    pub fn epsilon(&self, t: u64) -> f64 {
        match *self {
            ExplorationSchedule::ConstantEpsilon { eps0 } => eps0,
            ExplorationSchedule::LinearDecay {
                eps0,
                eps_min,
                decay_steps,
            } => {
                let frac = (t as f64 / decay_steps as f64).min(1.0);
                eps0 + (eps_min - eps0) * frac
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ExplorationSchedule::ConstantEpsilon { eps0 } => (0.0..=1.0).contains(&eps0),
            ExplorationSchedule::LinearDecay {
                eps0,
                eps_min,
                decay_steps,
            } => {
                (0.0..=1.0).contains(&eps0)
                    && (0.0..=1.0).contains(&eps_min)
                    && eps_min <= eps0
                    && decay_steps > 0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(format!("invalid exploration schedule {self:?}")))
        }
    }
}

/// One observed transition. `a_next` is used by SARSA only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionSample {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
    pub a_next: Option<usize>,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    QLearning,
    Sarsa,
    DoubleQ,
}

/// Tabular learner state.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularAgent {
    pub q: QTable,
    /// Second estimator, present for [`Variant::DoubleQ`] only.
    pub q_b: Option<QTable>,
    pub visit_counts: Vec<u64>,
    visit_counts_b: Vec<u64>,
    pub discount: f64,
    pub lr: LearningRateSchedule,
    pub rate_clock: RateClock,
    pub explore: ExplorationSchedule,
    pub variant: Variant,
    /// Global step counter used by [`train`].
    pub steps: u64,
}

impl TabularAgent {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        variant: Variant,
        discount: f64,
        lr: LearningRateSchedule,
        explore: ExplorationSchedule,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Contract("agent needs at least one state and action".into()));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::Contract(format!("discount {discount} outside [0,1)")));
        }
        lr.validate()?;
        explore.validate()?;
        let pairs = n_states * n_actions;
        Ok(Self {
            q: QTable::zeros(n_states, n_actions),
            q_b: (variant == Variant::DoubleQ).then(|| QTable::zeros(n_states, n_actions)),
            visit_counts: vec![0; pairs],
            visit_counts_b: vec![0; pairs],
            discount,
            lr,
            rate_clock: RateClock::Global,
            explore,
            variant,
            steps: 0,
        })
    }

    /// Optimistic constant initialization of every table.
    pub fn with_initial_value(mut self, value: f64) -> Self {
        let (ns, na) = (self.q.n_states(), self.q.n_actions());
        self.q = QTable::filled(ns, na, value);
        if self.q_b.is_some() {
            self.q_b = Some(QTable::filled(ns, na, value));
        }
        self
    }

    pub fn with_rate_clock(mut self, clock: RateClock) -> Self {
        self.rate_clock = clock;
        self
    }

    pub fn n_states(&self) -> usize {
        self.q.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.q.n_actions()
    }

    fn pair(&self, s: usize, a: usize) -> usize {
        s * self.n_actions() + a
    }

    fn check_sample(&self, sample: &TransitionSample) -> Result<()> {
        let (ns, na) = (self.n_states(), self.n_actions());
        if sample.s >= ns || sample.s_next >= ns || sample.a >= na {
            return Err(Error::Contract(format!("sample {sample:?} out of range")));
        }
        if sample.a_next.is_some_and(|a| a >= na) {
            return Err(Error::Contract(format!("a_next in {sample:?} out of range")));
        }
        Ok(())
    }

    fn rate(&self, visits: u64, t: u64) -> f64 {
        match self.rate_clock {
            RateClock::Global => self.lr.rate(t),
            RateClock::PerPair => self.lr.rate(visits),
        }
    }

    /// Table used for greedy decisions: `q`, or `q + q_b` for double Q-learning.
    pub fn decision_table(&self) -> QTable {
        match &self.q_b {
            Some(b) => self.q.sum_with(b),
            None => self.q.clone(),
        }
    }

    /// Greedy action in `s`, lowest index on ties.
    pub fn greedy_action(&self, s: usize) -> usize {
        match &self.q_b {
            Some(b) => {
                let sum: Vec<f64> = self.q.row(s).iter().zip(b.row(s)).map(|(x, y)| x + y).collect();
                argmax(&sum)
            }
            None => self.q.argmax(s),
        }
    }

    /// ε-greedy action selection at step `t`.
    pub fn select_action<R: Rng + ?Sized>(&self, s: usize, t: u64, rng: &mut R) -> usize {
        let eps = self.explore.epsilon(t);
        if eps > 0.0 && rng.random::<f64>() < eps {
            rng.random_range(0..self.n_actions())
        } else {
            self.greedy_action(s)
        }
    }

    fn td_update(&mut self, s: usize, a: usize, target: f64, t: u64) {
        let idx = self.pair(s, a);
        let alpha = self.rate(self.visit_counts[idx], t);
        let old = self.q.get(s, a);
        self.q.set(s, a, old + alpha * (target - old));
        self.visit_counts[idx] += 1;
    }

    /// `q(s,a) += α_t (r + γ max_{a'} q(s',a') (1 − terminal) − q(s,a))`.
    pub fn q_learning_step(&mut self, sample: &TransitionSample, t: u64) -> Result<()> {
        if self.variant != Variant::QLearning {
            return Err(Error::Contract("q_learning_step on a non Q-learning agent".into()));
        }
        self.check_sample(sample)?;
        let cont = if sample.terminal { 0.0 } else { self.q.max(sample.s_next) };
        let target = sample.r + self.discount * cont;
        self.td_update(sample.s, sample.a, target, t);
        Ok(())
    }

    /// `q(s,a) += α_t (r + γ q(s',a') (1 − terminal) − q(s,a))`.
    pub fn sarsa_step(&mut self, sample: &TransitionSample, t: u64) -> Result<()> {
        if self.variant != Variant::Sarsa {
            return Err(Error::Contract("sarsa_step on a non SARSA agent".into()));
        }
        self.check_sample(sample)?;
        let cont = if sample.terminal {
            0.0
        } else {
            let a_next = sample.a_next.ok_or_else(|| {
                Error::Contract("SARSA sample without a_next on a non-terminal transition".into())
            })?;
            self.q.get(sample.s_next, a_next)
        };
        let target = sample.r + self.discount * cont;
        self.td_update(sample.s, sample.a, target, t);
        Ok(())
    }

    /// Double Q-learning: a fair coin picks the table to update; the other
    /// table evaluates the updated table's greedy next action.
    pub fn double_q_step<R: Rng + ?Sized>(
        &mut self,
        sample: &TransitionSample,
        t: u64,
        rng: &mut R,
    ) -> Result<()> {
        if self.variant != Variant::DoubleQ {
            return Err(Error::Contract("double_q_step on a non double-Q agent".into()));
        }
        self.check_sample(sample)?;
        let update_a = rng.random_bool(0.5);
        let idx = self.pair(sample.s, sample.a);
        let q_b = self.q_b.as_mut().expect("double-Q agent always holds a second table");
        let (learner, evaluator, counts) = if update_a {
            (&mut self.q, &*q_b, &mut self.visit_counts)
        } else {
            (q_b, &self.q, &mut self.visit_counts_b)
        };
        let cont = if sample.terminal {
            0.0
        } else {
            let a_star = learner.argmax(sample.s_next);
            evaluator.get(sample.s_next, a_star)
        };
        let target = sample.r + self.discount * cont;
        let alpha = match self.rate_clock {
            RateClock::Global => self.lr.rate(t),
            RateClock::PerPair => self.lr.rate(counts[idx]),
        };
        let old = learner.get(sample.s, sample.a);
        learner.set(sample.s, sample.a, old + alpha * (target - old));
        counts[idx] += 1;
        Ok(())
    }

    /// Apply the update rule of this agent's variant.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        sample: &TransitionSample,
        t: u64,
        rng: &mut R,
    ) -> Result<()> {
        match self.variant {
            Variant::QLearning => self.q_learning_step(sample, t),
            Variant::Sarsa => self.sarsa_step(sample, t),
            Variant::DoubleQ => self.double_q_step(sample, t, rng),
        }
    }

    /// Re-apply a recorded trace, in order, starting at the agent's current
    /// step counter. Only deterministic variants can be replayed.
    pub fn replay(&mut self, trace: &[TransitionSample]) -> Result<()> {
        for sample in trace {
            let t = self.steps;
            match self.variant {
                Variant::QLearning => self.q_learning_step(sample, t)?,
                Variant::Sarsa => self.sarsa_step(sample, t)?,
                Variant::DoubleQ => {
                    return Err(Error::Contract(
                        "double-Q updates depend on coin flips and cannot be replayed".into(),
                    ))
                }
            }
            self.steps += 1;
        }
        Ok(())
    }

    /// Snapshot as CSV (`state, action, q_value[, q_b_value]`).
    pub fn write_q_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        self.q.write_csv(out, self.q_b.as_ref())
    }
}

/// Run `horizon` environment steps from the environment's current state,
/// updating the agent after each one. Returns the transition trace.
///
/// Behaviour and SARSA target policies are both ε-greedy on the same
/// schedule.
pub fn train<E: DiscreteEnv + ?Sized>(
    agent: &mut TabularAgent,
    env: &mut E,
    horizon: usize,
    rng: &mut SimRng,
) -> Result<Vec<TransitionSample>> {
    let mut trace = Vec::with_capacity(horizon);
    train_observed(agent, env, horizon, rng, |sample| trace.push(*sample))?;
    Ok(trace)
}

/// [`train`] handing every transition to `on_step` as soon as the agent has
/// learned from it. Transitions before a failing step have been observed
/// when the error is returned.
pub fn train_observed<E: DiscreteEnv + ?Sized>(
    agent: &mut TabularAgent,
    env: &mut E,
    horizon: usize,
    rng: &mut SimRng,
    mut on_step: impl FnMut(&TransitionSample),
) -> Result<()> {
    if env.n_states() != agent.n_states() || env.n_actions() != agent.n_actions() {
        return Err(Error::Contract(format!(
            "agent shape {}x{} does not match environment {}x{}",
            agent.n_states(),
            agent.n_actions(),
            env.n_states(),
            env.n_actions()
        )));
    }
    if horizon == 0 {
        return Ok(());
    }
    let mut s = env.state();
    let mut a = agent.select_action(s, agent.steps, rng);
    for step in 0..horizon {
        let t = agent.steps;
        let outcome = env
            .step(a)
            .map_err(|e| Error::EnvStep { step, source: Box::new(e) })?;
        let a_next = (agent.variant == Variant::Sarsa && !outcome.terminal)
            .then(|| agent.select_action(outcome.next_state, t + 1, rng));
        let sample = TransitionSample {
            s,
            a,
            r: outcome.reward,
            s_next: outcome.next_state,
            a_next,
            terminal: outcome.terminal,
        };
        agent.update(&sample, t, rng)?;
        agent.steps += 1;
        on_step(&sample);
        s = env.state();
        a = match a_next {
            Some(a_next) => a_next,
            None => agent.select_action(s, agent.steps, rng),
        };
    }
    Ok(())
}
