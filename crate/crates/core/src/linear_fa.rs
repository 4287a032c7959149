//! Linear action-value approximation `q_θ(s,a) = θᵀψ(s,a)` trained by
//! semi-gradient Q-learning, and the caching cost model
//! `q(s,a) = (θ^p_p + θ^R·a_prev)ᵀ(1 − a)`.
//!
//! The caching model estimates a cost, so its greedy action is an argmin and
//! its TD target takes a min over the next cache vectors. Since every cache
//! vector holds exactly `M` files, `a_prevᵀ(1−a) = aᵀ(1−a_prev)` is the
//! number of files fetched, so `θ^R` is the per-file refresh cost.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::CachingEnv;
use crate::error::{Error, Result};
use crate::mdp::argmin;
use crate::tabular::{ExplorationSchedule, LearningRateSchedule, TransitionSample};

/// Feature map `ψ: S × A → R^d`.
pub trait FeatureMap {
    fn dim(&self) -> usize;
    fn features(&self, s: usize, a: usize) -> Vec<f64>;
}

/// Indicator of the `(s,a)` pair; reduces the linear model to a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneHotFeatures {
    pub n_states: usize,
    pub n_actions: usize,
}

impl FeatureMap for OneHotFeatures {
    fn dim(&self) -> usize {
        self.n_states * self.n_actions
    }

    fn features(&self, s: usize, a: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        x[s * self.n_actions + a] = 1.0;
        x
    }
}

/// Feature map given by a closure.
pub struct FnFeatures<F: Fn(usize, usize) -> Vec<f64>> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(usize, usize) -> Vec<f64>> FeatureMap for FnFeatures<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn features(&self, s: usize, a: usize) -> Vec<f64> {
        (self.f)(s, a)
    }
}

/// `θᵀx`.
pub fn linear_q_value(theta: &[f64], features: &[f64]) -> Result<f64> {
    if theta.len() != features.len() {
        return Err(Error::Contract(format!(
            "parameter length {} does not match feature length {}",
            theta.len(),
            features.len()
        )));
    }
    Ok(theta.iter().zip(features).map(|(a, b)| a * b).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearQ {
    pub theta: Vec<f64>,
    pub discount: f64,
    pub lr: LearningRateSchedule,
}

impl LinearQ {
    pub fn zeros(dim: usize, discount: f64, lr: LearningRateSchedule) -> Self {
        Self {
            theta: vec![0.0; dim],
            discount,
            lr,
        }
    }

    pub fn value<M: FeatureMap + ?Sized>(&self, fmap: &M, s: usize, a: usize) -> Result<f64> {
        linear_q_value(&self.theta, &fmap.features(s, a))
    }

    /// `θ += α_t (r + γ max_{a'} θᵀψ(s',a')(1 − terminal) − θᵀψ(s,a)) ψ(s,a)`,
    /// the max taken over `candidates`.
    pub fn semi_gradient_q_step<M: FeatureMap + ?Sized>(
        &mut self,
        sample: &TransitionSample,
        candidates: &[usize],
        fmap: &M,
        t: u64,
    ) -> Result<()> {
        if fmap.dim() != self.theta.len() {
            return Err(Error::Contract(format!(
                "feature dimension {} does not match parameter length {}",
                fmap.dim(),
                self.theta.len()
            )));
        }
        let psi = fmap.features(sample.s, sample.a);
        let q = linear_q_value(&self.theta, &psi)?;
        let cont = if sample.terminal {
            0.0
        } else {
            if candidates.is_empty() {
                return Err(Error::Contract("no candidate actions at a non-terminal state".into()));
            }
            let mut best = f64::NEG_INFINITY;
            for &a in candidates {
                best = best.max(linear_q_value(&self.theta, &fmap.features(sample.s_next, a))?);
            }
            best
        };
        let delta = sample.r + self.discount * cont - q;
        let step = self.lr.rate(t) * delta;
        for (th, x) in self.theta.iter_mut().zip(&psi) {
            *th += step * x;
        }
        Ok(())
    }
}

/// Parameters of the caching cost model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachingFeatureParams {
    /// Per popularity state, the average cost of not caching each file.
    pub theta_p: Vec<Vec<f64>>,
    /// Average refresh cost per fetched file.
    pub theta_r: f64,
}

/// One caching transition, with 0/1 cache vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CachingTransition<'a> {
    pub p: usize,
    pub a_prev: &'a [bool],
    pub a: &'a [bool],
    pub p_next: usize,
}

impl CachingFeatureParams {
    pub fn zeros(n_popularity_states: usize, n_files: usize) -> Self {
        Self {
            theta_p: vec![vec![0.0; n_files]; n_popularity_states],
            theta_r: 0.0,
        }
    }

    pub fn n_files(&self) -> usize {
        self.theta_p.first().map_or(0, Vec::len)
    }

    fn check(&self, p: usize, a_prev: &[bool], a: &[bool]) -> Result<()> {
        let f = self.n_files();
        if p >= self.theta_p.len() {
            return Err(Error::Contract(format!("popularity state {p} out of range")));
        }
        if a_prev.len() != f || a.len() != f {
            return Err(Error::Contract(format!("cache vectors must have {f} entries")));
        }
        Ok(())
    }
}

/// `(θ^p_p + θ^R·a_prev)ᵀ(1 − a)`: estimated cost of caching `a`.
pub fn caching_q_value(params: &CachingFeatureParams, p: usize, a_prev: &[bool], a: &[bool]) -> Result<f64> {
    params.check(p, a_prev, a)?;
    Ok(cost_estimate(params, p, a_prev, a))
}

fn cost_estimate(params: &CachingFeatureParams, p: usize, a_prev: &[bool], a: &[bool]) -> f64 {
    params.theta_p[p]
        .iter()
        .zip(a_prev)
        .zip(a)
        .filter(|(_, &cached)| !cached)
        .map(|((&th, &prev), _)| th + if prev { params.theta_r } else { 0.0 })
        .sum()
}

/// Index of the candidate with the lowest estimated cost, lowest index on
/// ties.
pub fn caching_greedy(
    params: &CachingFeatureParams,
    p: usize,
    a_prev: &[bool],
    candidates: &[Vec<bool>],
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::Contract("no candidate cache vectors".into()));
    }
    let values = candidates
        .iter()
        .map(|a| caching_q_value(params, p, a_prev, a))
        .collect::<Result<Vec<_>>>()?;
    Ok(argmin(&values))
}

/// Semi-gradient step on a cost: the target is
/// `cost + γ min_{a'} q(p_next, a, a')` over `candidates`, and only the
/// components touched by `(1 − a)` and the refresh count move.
pub fn caching_semi_gradient_step(
    params: &mut CachingFeatureParams,
    cost: f64,
    tr: CachingTransition<'_>,
    candidates: &[Vec<bool>],
    alpha: f64,
    gamma: f64,
) -> Result<()> {
    params.check(tr.p, tr.a_prev, tr.a)?;
    if tr.p_next >= params.theta_p.len() {
        return Err(Error::Contract(format!("popularity state {} out of range", tr.p_next)));
    }
    let m = candidates
        .first()
        .map(|c| c.iter().filter(|&&x| x).count())
        .ok_or_else(|| Error::Contract("no candidate cache vectors".into()))?;
    for v in [tr.a_prev, tr.a] {
        if v.iter().filter(|&&x| x).count() != m {
            return Err(Error::InvalidAction(format!("cache vector must hold exactly {m} files")));
        }
    }
    let q = cost_estimate(params, tr.p, tr.a_prev, tr.a);
    let next_best = candidates
        .iter()
        .map(|c| cost_estimate(params, tr.p_next, tr.a, c))
        .fold(f64::INFINITY, f64::min);
    let step = alpha * (cost + gamma * next_best - q);
    let mut refreshed = 0.0;
    for f in 0..tr.a.len() {
        if !tr.a[f] {
            params.theta_p[tr.p][f] += step;
            if tr.a_prev[f] {
                refreshed += 1.0;
            }
        }
    }
    params.theta_r += step * refreshed;
    Ok(())
}

/// Train caching parameters online on `env` for `horizon` steps with
/// ε-greedy exploration over the enumerated cache vectors. Returns the
/// per-step costs.
pub fn train_caching<R: Rng + ?Sized>(
    params: &mut CachingFeatureParams,
    env: &mut CachingEnv,
    horizon: usize,
    lr: LearningRateSchedule,
    explore: ExplorationSchedule,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let candidates = env.cache_vectors().to_vec();
    let gamma = env.config().discount;
    let mut costs = Vec::with_capacity(horizon);
    for t in 0..horizon as u64 {
        let p = env.popularity_state();
        let prev = env.previous_index();
        let a = if rng.random::<f64>() < explore.epsilon(t) {
            rng.random_range(0..candidates.len())
        } else {
            caching_greedy(params, p, &candidates[prev], &candidates)?
        };
        let step = env.cache(a)?;
        caching_semi_gradient_step(
            params,
            step.cost,
            CachingTransition {
                p,
                a_prev: &candidates[prev],
                a: &candidates[a],
                p_next: step.popularity_state,
            },
            &candidates,
            lr.rate(t),
            gamma,
        )?;
        costs.push(step.cost);
    }
    Ok(costs)
}
