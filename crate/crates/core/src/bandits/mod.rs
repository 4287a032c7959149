//! Multi-armed bandit policies and regret analytics.
//!
//! Index policies play every arm once, in order, before comparing indices;
//! afterwards they pull the arm with the largest index, lowest arm on ties.
//! The time argument `t` of every index is the total number of pulls so far.

mod exp3;
mod rank;
mod rca;
mod regret;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::envs::Feedback;
use crate::error::{Error, Result};
use crate::mdp::argmax;

pub use exp3::{exp3_probabilities, exp3_update, Exp3Policy};
pub use rank::{random_rank_resolve, RandomRankUsers, RankState};
pub use rca::{Phase, RcaAction, RcaPolicy, RcaState};
pub use regret::{
    empirical_regret, kl_bernoulli, lai_robbins_coefficients, lower_bound_curve, regret_from_counts,
    RegretTrace,
};

/// Running statistics of one arm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub pulls: u64,
    pub reward_sum: f64,
    /// Number of pulls on which the arm was observed available.
    pub free_observations: u64,
    /// Sum of the quality ratings seen while available.
    pub quality_sum: f64,
    pub successes: u64,
    pub failures: u64,
}

impl ArmStats {
    /// Record one pull. Rewards of at least one half count as Bernoulli
    /// successes.
    pub fn record(&mut self, fb: &Feedback) {
        self.pulls += 1;
        self.reward_sum += fb.reward;
        if fb.available {
            self.free_observations += 1;
            self.quality_sum += fb.quality;
        }
        if fb.reward >= 0.5 {
            self.successes += 1;
        } else {
            self.failures += 1;
        }
    }

    pub fn mean(&self) -> Option<f64> {
        (self.pulls > 0).then(|| self.reward_sum / self.pulls as f64)
    }

    /// Fraction of pulls observed available.
    pub fn availability_mean(&self) -> Option<f64> {
        (self.pulls > 0).then(|| self.free_observations as f64 / self.pulls as f64)
    }

    /// Mean quality over available observations; 0 when there are none.
    pub fn quality_mean(&self) -> f64 {
        if self.free_observations == 0 {
            0.0
        } else {
            self.quality_sum / self.free_observations as f64
        }
    }
}

/// `mean + sqrt(2 ln t / n)`.
pub fn ucb1_index(mean: f64, t: f64, n: u64) -> Result<f64> {
    if n == 0 || !(t >= 1.0) {
        return Err(Error::Contract(format!("UCB1 index needs t, n ≥ 1, got t={t}, n={n}")));
    }
    Ok(mean + (2.0 * t.ln() / n as f64).sqrt())
}

/// Default bisection precision of [`klucb_index`].
pub const KLUCB_PRECISION: f64 = 1e-6;
const KLUCB_MAX_ITER: usize = 100;

/// Largest `q ∈ [mean, 1]` with `n·kl(mean, q) ≤ ln t`, by bisection.
pub fn klucb_index(mean: f64, t: f64, n: u64, precision: f64) -> Result<f64> {
    if n == 0 || !(t >= 1.0) {
        return Err(Error::Contract(format!("KL-UCB index needs t, n ≥ 1, got t={t}, n={n}")));
    }
    if !(0.0..=1.0).contains(&mean) {
        return Err(Error::Contract(format!("KL-UCB mean {mean} outside [0,1]")));
    }
    let budget = t.ln() / n as f64;
    if mean >= 1.0 {
        return Ok(1.0);
    }
    if budget <= 0.0 {
        return Ok(mean);
    }
    let (mut lo, mut hi) = (mean, 1.0);
    for _ in 0..KLUCB_MAX_ITER {
        if hi - lo <= precision {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if kl_bernoulli(mean, mid) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Concave exploration function `g` with `g(1) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GKind {
    /// `g(x) = sqrt(ln x)`.
    #[default]
    SqrtLog,
    /// `g(x) = ln x`.
    Log,
}

impl GKind {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            GKind::SqrtLog => x.ln().max(0.0).sqrt(),
            GKind::Log => x.ln(),
        }
    }
}

/// `mean + g(t/n)`.
pub fn oksanen_index(mean: f64, t: f64, n: u64, g: GKind) -> Result<f64> {
    if n == 0 {
        return Err(Error::Contract("index needs n ≥ 1".into()));
    }
    Ok(mean + g.eval(t / n as f64))
}

/// `availability − β (g* − quality) ln t / n + sqrt(α ln t / n)`; `None`
/// for `g_star` drops the quality term.
pub fn rqos_ucb_value(
    availability: f64,
    quality: f64,
    g_star: Option<f64>,
    t: f64,
    n: u64,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Contract("RQoS-UCB index needs n ≥ 1".into()));
    }
    if !(t >= 1.0) {
        return Err(Error::Contract("RQoS-UCB index needs t ≥ 1".into()));
    }
    let ratio = t.ln() / n as f64;
    let penalty = g_star.map_or(0.0, |g| beta * (g - quality) * ratio);
    Ok(availability - penalty + (alpha * ratio).sqrt())
}

/// [`rqos_ucb_value`] from arm statistics. `g_star` is the best empirical
/// quality over arms with at least one available observation.
pub fn rqos_ucb_index(stats: &ArmStats, g_star: Option<f64>, t: f64, alpha: f64, beta: f64) -> Result<f64> {
    let avail = stats
        .availability_mean()
        .ok_or_else(|| Error::Contract("RQoS-UCB index needs n ≥ 1".into()))?;
    rqos_ucb_value(avail, stats.quality_mean(), g_star, t, stats.pulls, alpha, beta)
}

/// Index rule of an [`IndexPolicy`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum IndexRule {
    Ucb1,
    KlUcb {
        #[serde(default = "default_precision")]
        precision: f64,
    },
    Oksanen {
        #[serde(default)]
        g: GKind,
    },
    RqosUcb { alpha: f64, beta: f64 },
}

fn default_precision() -> f64 {
    KLUCB_PRECISION
}

impl IndexRule {
    /// Index of every arm; requires every arm to have been pulled.
    pub fn indices(&self, stats: &[ArmStats], t: f64) -> Result<Vec<f64>> {
        let g_star = match self {
            IndexRule::RqosUcb { .. } => stats
                .iter()
                .filter(|s| s.free_observations > 0)
                .map(ArmStats::quality_mean)
                .reduce(f64::max),
            _ => None,
        };
        stats
            .iter()
            .map(|s| {
                let mean = s.mean().ok_or_else(|| Error::Contract("arm never pulled".into()))?;
                match *self {
                    IndexRule::Ucb1 => ucb1_index(mean, t, s.pulls),
                    IndexRule::KlUcb { precision } => klucb_index(mean.clamp(0.0, 1.0), t, s.pulls, precision),
                    IndexRule::Oksanen { g } => oksanen_index(mean, t, s.pulls, g),
                    IndexRule::RqosUcb { alpha, beta } => rqos_ucb_index(s, g_star, t, alpha, beta),
                }
            })
            .collect()
    }
}

/// A single-user bandit policy.
pub trait BanditPolicy {
    fn n_arms(&self) -> usize;
    /// Arm to pull at 0-based round `t`.
    fn select(&mut self, t: usize, rng: &mut dyn rand::RngCore) -> usize;
    fn update(&mut self, arm: usize, feedback: &Feedback) -> Result<()>;
    /// Index (or selection probability) of `arm` at the last selection, when
    /// the policy has one.
    fn last_index(&self, _arm: usize) -> Option<f64> {
        None
    }
    /// Probability with which each arm was drawn at the last selection, for
    /// randomized policies.
    fn last_probabilities(&self) -> Option<&[f64]> {
        None
    }
}

/// Index policy: round-robin initialization, then argmax of an index rule.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexPolicy {
    pub rule: IndexRule,
    pub stats: Vec<ArmStats>,
    last: Vec<f64>,
}

impl IndexPolicy {
    pub fn new(n_arms: usize, rule: IndexRule) -> Result<Self> {
        if n_arms == 0 {
            return Err(Error::Contract("a policy needs at least one arm".into()));
        }
        Ok(Self {
            rule,
            stats: vec![ArmStats::default(); n_arms],
            last: vec![f64::NAN; n_arms],
        })
    }

    pub fn total_pulls(&self) -> u64 {
        self.stats.iter().map(|s| s.pulls).sum()
    }

    /// First never-pulled arm, if any.
    pub fn unexplored(&self) -> Option<usize> {
        self.stats.iter().position(|s| s.pulls == 0)
    }

    /// Current indices; `None` while some arm is unexplored.
    pub fn indices(&self) -> Option<Vec<f64>> {
        if self.unexplored().is_some() {
            return None;
        }
        self.rule.indices(&self.stats, self.total_pulls() as f64).ok()
    }
}

impl BanditPolicy for IndexPolicy {
    fn n_arms(&self) -> usize {
        self.stats.len()
    }

    fn select(&mut self, _t: usize, _rng: &mut dyn rand::RngCore) -> usize {
        if let Some(a) = self.unexplored() {
            return a;
        }
        let idx = self.indices().expect("all arms explored");
        let a = argmax(&idx);
        self.last = idx;
        a
    }

    fn update(&mut self, arm: usize, feedback: &Feedback) -> Result<()> {
        self.stats
            .get_mut(arm)
            .ok_or_else(|| Error::Contract(format!("arm {arm} out of range")))?
            .record(feedback);
        Ok(())
    }

    fn last_index(&self, arm: usize) -> Option<f64> {
        self.last.get(arm).copied().filter(|x| !x.is_nan())
    }
}

/// Thompson sampling with Beta(successes+1, failures+1) posteriors.
pub fn thompson_select<R: Rng + ?Sized>(stats: &[ArmStats], rng: &mut R) -> usize {
    let samples: Vec<f64> = stats
        .iter()
        .map(|s| {
            Beta::new(s.successes as f64 + 1.0, s.failures as f64 + 1.0)
                .expect("positive shape parameters")
                .sample(rng)
        })
        .collect();
    argmax(&samples)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThompsonPolicy {
    pub stats: Vec<ArmStats>,
}

impl ThompsonPolicy {
    pub fn new(n_arms: usize) -> Result<Self> {
        if n_arms == 0 {
            return Err(Error::Contract("a policy needs at least one arm".into()));
        }
        Ok(Self {
            stats: vec![ArmStats::default(); n_arms],
        })
    }
}

impl BanditPolicy for ThompsonPolicy {
    fn n_arms(&self) -> usize {
        self.stats.len()
    }

    fn select(&mut self, _t: usize, rng: &mut dyn rand::RngCore) -> usize {
        thompson_select(&self.stats, rng)
    }

    fn update(&mut self, arm: usize, feedback: &Feedback) -> Result<()> {
        self.stats
            .get_mut(arm)
            .ok_or_else(|| Error::Contract(format!("arm {arm} out of range")))?
            .record(feedback);
        Ok(())
    }
}

/// Uniformly random arm every round (baseline).
#[derive(Debug, Clone, PartialEq)]
pub struct UniformPolicy {
    n_arms: usize,
    probs: Vec<f64>,
}

impl UniformPolicy {
    pub fn new(n_arms: usize) -> Result<Self> {
        if n_arms == 0 {
            return Err(Error::Contract("a policy needs at least one arm".into()));
        }
        Ok(Self {
            n_arms,
            probs: vec![1.0 / n_arms as f64; n_arms],
        })
    }
}

impl BanditPolicy for UniformPolicy {
    fn n_arms(&self) -> usize {
        self.n_arms
    }

    fn select(&mut self, _t: usize, rng: &mut dyn rand::RngCore) -> usize {
        rng.random_range(0..self.n_arms)
    }

    fn update(&mut self, arm: usize, _feedback: &Feedback) -> Result<()> {
        if arm >= self.n_arms {
            return Err(Error::Contract(format!("arm {arm} out of range")));
        }
        Ok(())
    }

    fn last_probabilities(&self) -> Option<&[f64]> {
        Some(&self.probs)
    }
}

/// One per-user decision, for CSV export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionRecord {
    pub t: usize,
    pub user: usize,
    pub arm: usize,
    /// Empty during initialization or for index-free policies.
    pub index_value: Option<f64>,
    pub reward: f64,
    pub collided: bool,
}

/// Write decisions as CSV with header
/// `t,user,arm,index_value,reward,collided`.
pub fn write_decisions_csv<W: std::io::Write>(out: W, records: &[DecisionRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["t", "user", "arm", "index_value", "reward", "collided"])?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
