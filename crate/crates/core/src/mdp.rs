//! Finite Markov decision processes and their exact dynamic-programming
//! solvers.
//!
//! The model stores the transition kernel `p(s'|s,a)` and the expected reward
//! `r(s,a)` densely. All solvers iterate a Bellman operator until the sup-norm
//! distance between successive iterates drops to `tol`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default convergence tolerance for the iterative solvers.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default iteration cap for the iterative solvers.
pub const DEFAULT_MAX_ITER: usize = 100_000;

const KERNEL_EPS: f64 = 1e-9;

/// One atom of a discrete reward distribution: `(reward value, probability)`.
pub type RewardAtom = (f64, f64);

/// Complete tabular MDP model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    discount: f64,
    // flattened [s][a][s']
    transition: Vec<f64>,
    // flattened [s][a]
    expected_reward: Vec<f64>,
    // flattened [s][a][s'] -> atoms
    reward_support: Option<Vec<Vec<RewardAtom>>>,
}

/// JSON layout of a [`FiniteMdp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub discount: f64,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub expected_reward: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_support: Option<Vec<Vec<Vec<Vec<RewardAtom>>>>>,
}

impl TryFrom<MdpDocument> for FiniteMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        let mdp = FiniteMdp::new(doc.transition, doc.expected_reward, doc.discount)?;
        if mdp.n_states != doc.n_states || mdp.n_actions != doc.n_actions {
            return Err(Error::InvalidModel(format!(
                "declared shape {}x{} does not match kernel shape {}x{}",
                doc.n_states, doc.n_actions, mdp.n_states, mdp.n_actions
            )));
        }
        match doc.reward_support {
            Some(support) => mdp.with_reward_support(support),
            None => Ok(mdp),
        }
    }
}

impl From<FiniteMdp> for MdpDocument {
    fn from(mdp: FiniteMdp) -> Self {
        let (ns, na) = (mdp.n_states, mdp.n_actions);
        let transition = (0..ns)
            .map(|s| (0..na).map(|a| mdp.transition_row(s, a).to_vec()).collect())
            .collect();
        let expected_reward = (0..ns)
            .map(|s| (0..na).map(|a| mdp.reward(s, a)).collect())
            .collect();
        let reward_support = mdp.reward_support.as_ref().map(|sup| {
            (0..ns)
                .map(|s| {
                    (0..na)
                        .map(|a| (0..ns).map(|s2| sup[(s * na + a) * ns + s2].clone()).collect())
                        .collect()
                })
                .collect()
        });
        MdpDocument {
            n_states: ns,
            n_actions: na,
            discount: mdp.discount,
            transition,
            expected_reward,
            reward_support,
        }
    }
}

impl FiniteMdp {
    /// Build and validate a model from nested `[s][a][s']` transitions and
    /// `[s][a]` expected rewards.
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        expected_reward: Vec<Vec<f64>>,
        discount: f64,
    ) -> Result<Self> {
        let n_states = transition.len();
        if n_states == 0 {
            return Err(Error::InvalidModel("at least one state is required".into()));
        }
        let n_actions = transition[0].len();
        if n_actions == 0 {
            return Err(Error::InvalidModel("at least one action is required".into()));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidModel(format!("discount {discount} outside [0,1)")));
        }
        if expected_reward.len() != n_states {
            return Err(Error::InvalidModel(format!(
                "expected_reward has {} rows, expected {n_states}",
                expected_reward.len()
            )));
        }
        let mut flat_p = Vec::with_capacity(n_states * n_actions * n_states);
        let mut flat_r = Vec::with_capacity(n_states * n_actions);
        for (s, (rows, rewards)) in transition.iter().zip(&expected_reward).enumerate() {
            if rows.len() != n_actions || rewards.len() != n_actions {
                return Err(Error::InvalidModel(format!(
                    "state {s} must define exactly {n_actions} actions"
                )));
            }
            for (a, row) in rows.iter().enumerate() {
                check_distribution(row, n_states, &format!("transition({s},{a},.)"))?;
                flat_p.extend_from_slice(row);
                let r = rewards[a];
                if !r.is_finite() {
                    return Err(Error::InvalidModel(format!("reward({s},{a}) is not finite")));
                }
                flat_r.push(r);
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            discount,
            transition: flat_p,
            expected_reward: flat_r,
            reward_support: None,
        })
    }

    /// Attach a full reward distribution `p(r|s,a,s')`, indexed `[s][a][s']`.
    ///
    /// The expected reward must agree with the support within 1e-9.
    pub fn with_reward_support(mut self, support: Vec<Vec<Vec<Vec<RewardAtom>>>>) -> Result<Self> {
        let (ns, na) = (self.n_states, self.n_actions);
        if support.len() != ns {
            return Err(Error::InvalidModel("reward_support has wrong state count".into()));
        }
        let mut flat = Vec::with_capacity(ns * na * ns);
        for (s, per_action) in support.into_iter().enumerate() {
            if per_action.len() != na {
                return Err(Error::InvalidModel(format!("reward_support({s}) has wrong action count")));
            }
            for (a, per_next) in per_action.into_iter().enumerate() {
                if per_next.len() != ns {
                    return Err(Error::InvalidModel(format!(
                        "reward_support({s},{a}) has wrong next-state count"
                    )));
                }
                let mut mean = 0.0;
                for (s2, atoms) in per_next.into_iter().enumerate() {
                    let total: f64 = atoms.iter().map(|&(_, p)| p).sum();
                    if atoms.iter().any(|&(r, p)| !r.is_finite() || !(0.0..=1.0).contains(&p))
                        || (total - 1.0).abs() > KERNEL_EPS
                    {
                        return Err(Error::InvalidModel(format!(
                            "reward_support({s},{a},{s2}) is not a distribution"
                        )));
                    }
                    let cond_mean: f64 = atoms.iter().map(|&(r, p)| r * p).sum();
                    mean += self.p(s, a, s2) * cond_mean;
                    flat.push(atoms);
                }
                if (mean - self.reward(s, a)).abs() > KERNEL_EPS {
                    return Err(Error::InvalidModel(format!(
                        "reward({s},{a}) = {} inconsistent with reward_support mean {mean}",
                        self.reward(s, a)
                    )));
                }
            }
        }
        self.reward_support = Some(flat);
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Copy of the model with another discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidModel(format!("discount {discount} outside [0,1)")));
        }
        let mut m = self.clone();
        m.discount = discount;
        Ok(m)
    }

    #[inline]
    pub fn p(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + s_next]
    }

    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.expected_reward[s * self.n_actions + a]
    }

    /// Reward atoms for `(s, a, s')`, when the full reward distribution is known.
    pub fn reward_atoms(&self, s: usize, a: usize, s_next: usize) -> Option<&[RewardAtom]> {
        self.reward_support
            .as_ref()
            .map(|sup| sup[(s * self.n_actions + a) * self.n_states + s_next].as_slice())
    }

    /// Same model with every expected reward (and reward atom) shifted by `c`.
    pub fn shift_rewards(&self, c: f64) -> Self {
        let mut m = self.clone();
        m.expected_reward.iter_mut().for_each(|r| *r += c);
        if let Some(sup) = m.reward_support.as_mut() {
            sup.iter_mut()
                .flat_map(|atoms| atoms.iter_mut())
                .for_each(|atom| atom.0 += c);
        }
        m
    }

    /// Largest absolute expected reward.
    pub fn reward_bound(&self) -> f64 {
        self.expected_reward.iter().fold(0.0_f64, |m, r| m.max(r.abs()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One-step lookahead `r(s,a) + γ Σ_{s'} p(s'|s,a) v(s')`.
    #[inline]
    pub fn lookahead(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        let cont: f64 = self.transition_row(s, a).iter().zip(v).map(|(p, x)| p * x).sum();
        self.reward(s, a) + self.discount * cont
    }
}

fn check_distribution(row: &[f64], len: usize, what: &str) -> Result<()> {
    if row.len() != len {
        return Err(Error::InvalidModel(format!("{what} has length {}, expected {len}", row.len())));
    }
    if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidModel(format!("{what} has an entry outside [0,1]")));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > KERNEL_EPS {
        return Err(Error::InvalidModel(format!("{what} sums to {total}")));
    }
    Ok(())
}

/// A policy that can be evaluated against a [`FiniteMdp`].
pub trait Policy {
    /// Probability of choosing `a` in `s`.
    fn prob(&self, s: usize, a: usize) -> f64;

    fn check_shape(&self, n_states: usize, n_actions: usize) -> Result<()>;
}

/// Deterministic stationary policy `s -> a`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    pub action_of: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(action_of: Vec<usize>) -> Self {
        Self { action_of }
    }

    pub fn action(&self, s: usize) -> usize {
        self.action_of[s]
    }
}

impl Policy for DeterministicPolicy {
    fn prob(&self, s: usize, a: usize) -> f64 {
        if self.action_of[s] == a {
            1.0
        } else {
            0.0
        }
    }

    fn check_shape(&self, n_states: usize, n_actions: usize) -> Result<()> {
        if self.action_of.len() != n_states {
            return Err(Error::Contract(format!(
                "policy covers {} states, model has {n_states}",
                self.action_of.len()
            )));
        }
        if let Some(s) = self.action_of.iter().position(|&a| a >= n_actions) {
            return Err(Error::Contract(format!("policy maps state {s} to an invalid action")));
        }
        Ok(())
    }
}

/// Stochastic stationary policy `π(a|s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticPolicy {
    pub pi: Vec<Vec<f64>>,
}

impl StochasticPolicy {
    pub fn new(pi: Vec<Vec<f64>>) -> Result<Self> {
        for (s, row) in pi.iter().enumerate() {
            let n = row.len();
            check_distribution(row, n, &format!("pi(.|{s})"))?;
        }
        Ok(Self { pi })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            pi: vec![vec![1.0 / n_actions as f64; n_actions]; n_states],
        }
    }
}

impl Policy for StochasticPolicy {
    fn prob(&self, s: usize, a: usize) -> f64 {
        self.pi[s][a]
    }

    fn check_shape(&self, n_states: usize, n_actions: usize) -> Result<()> {
        if self.pi.len() != n_states || self.pi.iter().any(|r| r.len() != n_actions) {
            return Err(Error::Contract("stochastic policy shape mismatch".into()));
        }
        Ok(())
    }
}

/// State values `v(s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub v: Vec<f64>,
}

impl ValueTable {
    pub fn zeros(n_states: usize) -> Self {
        Self { v: vec![0.0; n_states] }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// Sup-norm distance to another table.
    pub fn sup_distance(&self, other: &ValueTable) -> f64 {
        sup_distance(&self.v, &other.v)
    }
}

/// Action values `q(s,a)`, row-major by state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    q: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::filled(n_states, n_actions, 0.0)
    }

    pub fn filled(n_states: usize, n_actions: usize, value: f64) -> Self {
        Self {
            n_states,
            n_actions,
            q: vec![value; n_states * n_actions],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        if n_states == 0 || n_actions == 0 || rows.iter().any(|r| r.len() != n_actions) {
            return Err(Error::Contract("q rows must be non-empty and rectangular".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            q: rows.into_iter().flatten().collect(),
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.q[s * self.n_actions + a] = value;
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.q[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.q
    }

    /// Greedy action in `s`, lowest index on ties.
    pub fn argmax(&self, s: usize) -> usize {
        argmax(self.row(s))
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_distance(&self, other: &QTable) -> f64 {
        sup_distance(&self.q, &other.q)
    }

    /// Entrywise sum with a table of the same shape.
    pub fn sum_with(&self, other: &QTable) -> QTable {
        QTable {
            n_states: self.n_states,
            n_actions: self.n_actions,
            q: self.q.iter().zip(&other.q).map(|(a, b)| a + b).collect(),
        }
    }

    /// Greedy policy `s -> argmax_a q(s,a)`.
    pub fn greedy_policy(&self) -> DeterministicPolicy {
        DeterministicPolicy::new((0..self.n_states).map(|s| self.argmax(s)).collect())
    }

    /// Write the table as CSV with columns `state, action, q_value`, plus
    /// `q_b_value` when a second table is given.
    pub fn write_csv<W: std::io::Write>(&self, out: W, second: Option<&QTable>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if second.is_some() {
            w.write_record(["state", "action", "q_value", "q_b_value"])?;
        } else {
            w.write_record(["state", "action", "q_value"])?;
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let mut rec = vec![s.to_string(), a.to_string(), self.get(s, a).to_string()];
                if let Some(b) = second {
                    rec.push(b.get(s, a).to_string());
                }
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Index of the smallest entry, lowest index on ties.
pub fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// One application of the policy's Bellman expectation operator to `v`.
pub fn bellman_expectation_backup<P: Policy + ?Sized>(
    mdp: &FiniteMdp,
    policy: &P,
    v: &ValueTable,
) -> ValueTable {
    let v_next = (0..mdp.n_states)
        .map(|s| {
            (0..mdp.n_actions)
                .map(|a| {
                    let pa = policy.prob(s, a);
                    if pa == 0.0 {
                        0.0
                    } else {
                        pa * mdp.lookahead(s, a, &v.v)
                    }
                })
                .sum()
        })
        .collect();
    ValueTable { v: v_next }
}

/// One application of the Bellman optimality operator to `v`.
pub fn bellman_optimality_backup(mdp: &FiniteMdp, v: &ValueTable) -> ValueTable {
    let v_next = (0..mdp.n_states)
        .map(|s| {
            (0..mdp.n_actions)
                .map(|a| mdp.lookahead(s, a, &v.v))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    ValueTable { v: v_next }
}

/// `q(s,a) = r(s,a) + γ Σ p(s'|s,a) v(s')` for every pair.
pub fn q_from_v(mdp: &FiniteMdp, v: &ValueTable) -> QTable {
    let mut q = QTable::zeros(mdp.n_states, mdp.n_actions);
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            q.set(s, a, mdp.lookahead(s, a, &v.v));
        }
    }
    q
}

fn check_solver_args(tol: f64, max_iter: usize) -> Result<()> {
    if !(tol > 0.0) {
        return Err(Error::Contract(format!("tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::Contract("max_iter must be positive".into()));
    }
    Ok(())
}

/// Iterative policy evaluation of the state-value function.
pub fn policy_evaluation<P: Policy + ?Sized>(
    mdp: &FiniteMdp,
    policy: &P,
    tol: f64,
    max_iter: usize,
) -> Result<ValueTable> {
    check_solver_args(tol, max_iter)?;
    policy.check_shape(mdp.n_states, mdp.n_actions)?;
    let mut v = ValueTable::zeros(mdp.n_states);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = bellman_expectation_backup(mdp, policy, &v);
        residual = next.sup_distance(&v);
        v = next;
        if residual <= tol {
            return Ok(v);
        }
    }
    Err(Error::NotConverged { iterations: max_iter, residual })
}

/// Iterative policy evaluation of the action-value function:
/// `q(s,a) ← r(s,a) + γ Σ_{s'} p(s'|s,a) Σ_{a'} π(a'|s') q(s',a')`.
pub fn q_policy_evaluation<P: Policy + ?Sized>(
    mdp: &FiniteMdp,
    policy: &P,
    tol: f64,
    max_iter: usize,
) -> Result<QTable> {
    check_solver_args(tol, max_iter)?;
    policy.check_shape(mdp.n_states, mdp.n_actions)?;
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let mut q = QTable::zeros(ns, na);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let v_pi: Vec<f64> = (0..ns)
            .map(|s| (0..na).map(|a| policy.prob(s, a) * q.get(s, a)).sum())
            .collect();
        let mut next = QTable::zeros(ns, na);
        for s in 0..ns {
            for a in 0..na {
                next.set(s, a, mdp.lookahead(s, a, &v_pi));
            }
        }
        residual = next.sup_distance(&q);
        q = next;
        if residual <= tol {
            return Ok(q);
        }
    }
    Err(Error::NotConverged { iterations: max_iter, residual })
}

/// Greedy improvement: `s -> argmax_a q(s,a)`, lowest action index on ties.
pub fn policy_improvement(mdp: &FiniteMdp, q: &QTable) -> Result<DeterministicPolicy> {
    if q.n_states() != mdp.n_states || q.n_actions() != mdp.n_actions {
        return Err(Error::Contract("q table shape does not match the model".into()));
    }
    if q.values().iter().any(|x| !x.is_finite()) {
        return Err(Error::Contract("q table has non-finite entries".into()));
    }
    Ok(q.greedy_policy())
}

/// Value iteration. Returns the optimal values and the greedy policy they
/// induce.
pub fn value_iteration(
    mdp: &FiniteMdp,
    tol: f64,
    max_iter: usize,
) -> Result<(ValueTable, DeterministicPolicy)> {
    check_solver_args(tol, max_iter)?;
    let mut v = ValueTable::zeros(mdp.n_states);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = bellman_optimality_backup(mdp, &v);
        residual = next.sup_distance(&v);
        v = next;
        if residual <= tol {
            let policy = q_from_v(mdp, &v).greedy_policy();
            return Ok((v, policy));
        }
    }
    Err(Error::NotConverged { iterations: max_iter, residual })
}

/// Fixed point of the optimal action-value backup
/// `q(s,a) ← r(s,a) + γ Σ_{s'} p(s'|s,a) max_{a'} q(s',a')`.
pub fn optimal_q(mdp: &FiniteMdp, tol: f64, max_iter: usize) -> Result<QTable> {
    check_solver_args(tol, max_iter)?;
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let mut q = QTable::zeros(ns, na);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let v: Vec<f64> = (0..ns).map(|s| q.max(s)).collect();
        let mut next = QTable::zeros(ns, na);
        for s in 0..ns {
            for a in 0..na {
                next.set(s, a, mdp.lookahead(s, a, &v));
            }
        }
        residual = next.sup_distance(&q);
        q = next;
        if residual <= tol {
            return Ok(q);
        }
    }
    Err(Error::NotConverged { iterations: max_iter, residual })
}

/// Outcome of [`policy_iteration`].
#[derive(Debug, Clone)]
pub struct PolicyIterationOutcome {
    pub policy: DeterministicPolicy,
    pub value: ValueTable,
    /// Value of every evaluated policy, in order.
    pub history: Vec<ValueTable>,
    pub improvement_steps: usize,
}

/// Policy iteration: alternate action-value evaluation and greedy
/// improvement until the policy is stable.
///
/// A state keeps its current action unless another action beats it by more
/// than `tol`, so the loop cannot cycle between equal-valued actions.
pub fn policy_iteration(
    mdp: &FiniteMdp,
    tol: f64,
    max_iter: usize,
) -> Result<PolicyIterationOutcome> {
    check_solver_args(tol, max_iter)?;
    let mut policy = DeterministicPolicy::new(vec![0; mdp.n_states]);
    let mut history = Vec::new();
    let mut steps = 0;
    loop {
        let q = q_policy_evaluation(mdp, &policy, tol, max_iter)?;
        let value = ValueTable {
            v: (0..mdp.n_states).map(|s| q.get(s, policy.action(s))).collect(),
        };
        history.push(value.clone());
        let greedy = policy_improvement(mdp, &q)?;
        let mut next = policy.clone();
        let mut changed = false;
        for s in 0..mdp.n_states {
            let g = greedy.action(s);
            if q.get(s, g) > q.get(s, policy.action(s)) + tol {
                next.action_of[s] = g;
                changed = true;
            }
        }
        if !changed {
            return Ok(PolicyIterationOutcome {
                policy,
                value,
                history,
                improvement_steps: steps,
            });
        }
        policy = next;
        steps += 1;
        if steps > max_iter {
            return Err(Error::NotConverged {
                iterations: steps,
                residual: f64::NAN,
            });
        }
    }
}
