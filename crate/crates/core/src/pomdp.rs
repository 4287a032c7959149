//! Partially observable MDPs: Bayesian belief tracking and value iteration
//! on a fixed belief grid with nearest-neighbour lookup.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{argmax, FiniteMdp, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::rng::sample_discrete;

/// Largest number of hidden states a [`BeliefGrid`] accepts.
pub const MAX_GRID_STATES: usize = 6;

const KERNEL_EPS: f64 = 1e-9;

/// Finite POMDP: an MDP plus an observation kernel `O(z|s',a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PomdpDocument", into = "PomdpDocument")]
pub struct PomdpModel {
    mdp: FiniteMdp,
    n_observations: usize,
    // flattened [a][s'][z]
    observation: Vec<f64>,
}

/// JSON layout: the MDP fields plus `n_observations` and
/// `observation_kernel[a][s'][z]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PomdpDocument {
    #[serde(flatten)]
    pub mdp: FiniteMdp,
    pub n_observations: usize,
    pub observation_kernel: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<PomdpDocument> for PomdpModel {
    type Error = Error;

    fn try_from(doc: PomdpDocument) -> Result<Self> {
        let model = PomdpModel::new(doc.mdp, doc.observation_kernel)?;
        if model.n_observations != doc.n_observations {
            return Err(Error::InvalidModel(format!(
                "declared {} observations, kernel has {}",
                doc.n_observations, model.n_observations
            )));
        }
        Ok(model)
    }
}

impl From<PomdpModel> for PomdpDocument {
    fn from(m: PomdpModel) -> Self {
        let (na, ns, nz) = (m.mdp.n_actions(), m.mdp.n_states(), m.n_observations);
        let observation_kernel = (0..na)
            .map(|a| (0..ns).map(|s| m.observation[(a * ns + s) * nz..][..nz].to_vec()).collect())
            .collect();
        PomdpDocument {
            n_observations: nz,
            observation_kernel,
            mdp: m.mdp,
        }
    }
}

impl PomdpModel {
    /// `observation_kernel` is indexed `[a][s'][z]`.
    pub fn new(mdp: FiniteMdp, observation_kernel: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        if observation_kernel.len() != na {
            return Err(Error::InvalidModel(format!(
                "observation kernel has {} actions, expected {na}",
                observation_kernel.len()
            )));
        }
        let nz = observation_kernel
            .first()
            .and_then(|rows| rows.first())
            .map_or(0, Vec::len);
        if nz == 0 {
            return Err(Error::InvalidModel("at least one observation is required".into()));
        }
        let mut flat = Vec::with_capacity(na * ns * nz);
        for (a, rows) in observation_kernel.iter().enumerate() {
            if rows.len() != ns {
                return Err(Error::InvalidModel(format!(
                    "observation kernel for action {a} has {} states, expected {ns}",
                    rows.len()
                )));
            }
            for (s, row) in rows.iter().enumerate() {
                if row.len() != nz || row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::InvalidModel(format!("O(.|{s},{a}) is not a distribution")));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > KERNEL_EPS {
                    return Err(Error::InvalidModel(format!("O(.|{s},{a}) sums to {total}")));
                }
                flat.extend_from_slice(row);
            }
        }
        Ok(Self {
            mdp,
            n_observations: nz,
            observation: flat,
        })
    }

    /// Identity observation kernel: the state is observed exactly.
    pub fn fully_observable(mdp: FiniteMdp) -> Self {
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        let kernel = (0..na)
            .map(|_| {
                (0..ns)
                    .map(|s| (0..ns).map(|z| if z == s { 1.0 } else { 0.0 }).collect())
                    .collect()
            })
            .collect();
        Self::new(mdp, kernel).expect("identity kernel is valid")
    }

    pub fn mdp(&self) -> &FiniteMdp {
        &self.mdp
    }

    pub fn n_states(&self) -> usize {
        self.mdp.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    pub fn n_observations(&self) -> usize {
        self.n_observations
    }

    /// `O(z|s',a)`.
    pub fn obs(&self, a: usize, s_next: usize, z: usize) -> f64 {
        self.observation[(a * self.n_states() + s_next) * self.n_observations + z]
    }

    fn obs_row(&self, a: usize, s_next: usize) -> &[f64] {
        let nz = self.n_observations;
        &self.observation[(a * self.n_states() + s_next) * nz..][..nz]
    }

    fn check_indices(&self, b: &BeliefState, a: usize, z: usize) -> Result<()> {
        if b.p.len() != self.n_states() {
            return Err(Error::Contract(format!(
                "belief has {} entries, model has {} states",
                b.p.len(),
                self.n_states()
            )));
        }
        if a >= self.n_actions() || z >= self.n_observations {
            return Err(Error::Contract(format!("action {a} or observation {z} out of range")));
        }
        Ok(())
    }

    /// Predicted next-state distribution `Σ_s p(s'|s,a) b(s)`.
    fn predict(&self, b: &BeliefState, a: usize) -> Vec<f64> {
        let ns = self.n_states();
        let mut pred = vec![0.0; ns];
        for (s, &bs) in b.p.iter().enumerate() {
            if bs > 0.0 {
                for (x, &p) in pred.iter_mut().zip(self.mdp.transition_row(s, a)) {
                    *x += p * bs;
                }
            }
        }
        pred
    }

    /// Expected immediate reward `Σ_s b(s) r(s,a)`.
    pub fn belief_reward(&self, b: &BeliefState, a: usize) -> f64 {
        b.p.iter().enumerate().map(|(s, &bs)| bs * self.mdp.reward(s, a)).sum()
    }
}

/// Probability distribution over hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub p: Vec<f64>,
}

impl BeliefState {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() || p.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Contract("belief entries must be non-negative".into()));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Contract(format!("belief sums to {total}")));
        }
        Ok(Self { p })
    }

    pub fn uniform(n: usize) -> Self {
        Self { p: vec![1.0 / n as f64; n] }
    }

    pub fn point(n: usize, s: usize) -> Self {
        let mut p = vec![0.0; n];
        p[s] = 1.0;
        Self { p }
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
    }
}

/// `p(z|b,a) = Σ_{s'} O(z|s',a) Σ_s p(s'|s,a) b(s)`.
pub fn observation_likelihood(model: &PomdpModel, b: &BeliefState, a: usize, z: usize) -> Result<f64> {
    model.check_indices(b, a, z)?;
    let pred = model.predict(b, a);
    Ok(pred.iter().enumerate().map(|(s, &x)| x * model.obs(a, s, z)).sum())
}

/// Bayes update of `b` after taking `a` and observing `z`.
pub fn belief_update(model: &PomdpModel, b: &BeliefState, a: usize, z: usize) -> Result<BeliefState> {
    model.check_indices(b, a, z)?;
    let pred = model.predict(b, a);
    posterior(model, &pred, a, z)
}

fn posterior(model: &PomdpModel, pred: &[f64], a: usize, z: usize) -> Result<BeliefState> {
    let mut post: Vec<f64> = pred.iter().enumerate().map(|(s, &x)| x * model.obs(a, s, z)).collect();
    let norm: f64 = post.iter().sum();
    if norm <= 0.0 {
        return Err(Error::ImpossibleObservation {
            action: a,
            observation: z,
        });
    }
    post.iter_mut().for_each(|x| *x /= norm);
    // a second pass absorbs the rounding of the first division
    let total: f64 = post.iter().sum();
    post.iter_mut().for_each(|x| *x /= total);
    Ok(BeliefState { p: post })
}

/// Regular grid over the belief simplex: all compositions of `m` into
/// `n_states` parts, scaled by `1/m`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefGrid {
    resolution: usize,
    n_states: usize,
    points: Vec<BeliefState>,
}

impl BeliefGrid {
    pub fn new(n_states: usize, resolution: usize) -> Result<Self> {
        if n_states == 0 || n_states > MAX_GRID_STATES {
            return Err(Error::TooLarge(format!(
                "belief grids support 1..={MAX_GRID_STATES} states, got {n_states}"
            )));
        }
        if resolution == 0 {
            return Err(Error::Contract("grid resolution must be positive".into()));
        }
        let mut points = Vec::new();
        let mut parts = vec![0usize; n_states];
        compositions(resolution, 0, &mut parts, &mut |c| {
            points.push(BeliefState {
                p: c.iter().map(|&k| k as f64 / resolution as f64).collect(),
            })
        });
        Ok(Self {
            resolution,
            n_states,
            points,
        })
    }

    /// Resolution 20 up to three states, coarser beyond to keep the grid
    /// below about five hundred points.
    pub fn with_default_resolution(n_states: usize) -> Result<Self> {
        let m = match n_states {
            0..=3 => 20,
            4 => 12,
            5 => 8,
            _ => 6,
        };
        Self::new(n_states, m)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn points(&self) -> &[BeliefState] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the grid point nearest to `b` in Euclidean distance, lowest
    /// index on ties.
    pub fn nearest(&self, b: &BeliefState) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, q) in self.points.iter().enumerate() {
            let d: f64 = q.p.iter().zip(&b.p).map(|(x, y)| (x - y) * (x - y)).sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Index of the vertex `e_s`.
    pub fn vertex(&self, s: usize) -> usize {
        self.nearest(&BeliefState::point(self.n_states, s))
    }
}

// Enumerate compositions of `left` into the remaining slots, in
// lexicographically decreasing order of the first coordinate.
fn compositions(left: usize, i: usize, parts: &mut [usize], f: &mut impl FnMut(&[usize])) {
    if i == parts.len() - 1 {
        parts[i] = left;
        f(parts);
        return;
    }
    for k in (0..=left).rev() {
        parts[i] = k;
        compositions(left - k, i + 1, parts, f);
    }
}

/// Outcome of [`belief_value_iteration`].
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefSolution {
    pub values: Vec<f64>,
    /// Greedy action per grid point.
    pub actions: Vec<usize>,
    pub iterations: usize,
    /// Sup-norm distance between successive iterates, one per sweep.
    pub residuals: Vec<f64>,
}

impl BeliefSolution {
    /// Ratios of successive residuals, skipping sweeps whose previous
    /// residual is below `floor`.
    pub fn contraction_factors(&self, floor: f64) -> Vec<f64> {
        self.residuals
            .windows(2)
            .filter(|w| w[0] > floor)
            .map(|w| w[1] / w[0])
            .collect()
    }
}

/// Policy acting on the nearest grid point of the current belief.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPolicy<'g> {
    pub grid: &'g BeliefGrid,
    pub actions: Vec<usize>,
}

impl GridPolicy<'_> {
    pub fn action(&self, b: &BeliefState) -> usize {
        self.actions[self.grid.nearest(b)]
    }
}

struct Successor {
    prob: f64,
    point: usize,
}

/// Value iteration on the belief MDP restricted to `grid`:
/// `v(b) ← max_a [r(b,a) + γ Σ_z p(z|b,a) v(nn(b'))]`.
pub fn belief_value_iteration(
    model: &PomdpModel,
    grid: &BeliefGrid,
    tol: f64,
    max_iter: usize,
) -> Result<BeliefSolution> {
    if grid.n_states() != model.n_states() {
        return Err(Error::Contract(format!(
            "grid over {} states, model has {}",
            grid.n_states(),
            model.n_states()
        )));
    }
    let (na, nz, np) = (model.n_actions(), model.n_observations(), grid.len());
    let gamma = model.mdp().discount();
    // successors[(i * na + a)] lists the reachable observations of point i
    let mut rewards = vec![0.0; np * na];
    let mut successors: Vec<Vec<Successor>> = Vec::with_capacity(np * na);
    for (i, b) in grid.points().iter().enumerate() {
        for a in 0..na {
            rewards[i * na + a] = model.belief_reward(b, a);
            let pred = model.predict(b, a);
            let mut list = Vec::new();
            for z in 0..nz {
                let prob: f64 = pred.iter().enumerate().map(|(s, &x)| x * model.obs(a, s, z)).sum();
                if prob > 0.0 {
                    let post = posterior(model, &pred, a, z)?;
                    list.push(Successor {
                        prob,
                        point: grid.nearest(&post),
                    });
                }
            }
            successors.push(list);
        }
    }
    let backup = |v: &[f64], i: usize, a: usize| -> f64 {
        let cont: f64 = successors[i * na + a].iter().map(|s| s.prob * v[s.point]).sum();
        rewards[i * na + a] + gamma * cont
    };
    let mut v = vec![0.0; np];
    let mut residuals = Vec::new();
    for it in 1..=max_iter {
        let next: Vec<f64> = (0..np)
            .map(|i| (0..na).map(|a| backup(&v, i, a)).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let diff = next.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        residuals.push(diff);
        v = next;
        if diff <= tol {
            let actions = (0..np)
                .map(|i| argmax(&(0..na).map(|a| backup(&v, i, a)).collect::<Vec<_>>()))
                .collect();
            return Ok(BeliefSolution {
                values: v,
                actions,
                iterations: it,
                residuals,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// [`belief_value_iteration`] with the default tolerance and iteration cap.
pub fn solve_on_grid(model: &PomdpModel, grid: &BeliefGrid) -> Result<BeliefSolution> {
    belief_value_iteration(model, grid, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

/// Simulated trajectory; `beliefs` has one more entry than the other fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub beliefs: Vec<BeliefState>,
    pub hidden_states: Vec<usize>,
    pub actions: Vec<usize>,
    pub observations: Vec<usize>,
    pub rewards: Vec<f64>,
}

/// Simulate `horizon` steps: the hidden state follows the true kernels, the
/// policy sees only the belief, and the belief is updated by Bayes' rule.
/// Rewards are the expected rewards `r(s,a)` of the visited hidden states.
pub fn belief_rollout<R: Rng + ?Sized>(
    model: &PomdpModel,
    mut policy: impl FnMut(&BeliefState) -> usize,
    b0: &BeliefState,
    horizon: usize,
    rng: &mut R,
) -> Result<Rollout> {
    let b0 = BeliefState::new(b0.p.clone())?;
    if b0.p.len() != model.n_states() {
        return Err(Error::Contract("initial belief has the wrong dimension".into()));
    }
    let mut s = sample_discrete(&b0.p, rng);
    let mut out = Rollout {
        beliefs: vec![b0],
        hidden_states: vec![s],
        actions: Vec::with_capacity(horizon),
        observations: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
    };
    for _ in 0..horizon {
        let b = out.beliefs.last().expect("non-empty");
        let a = policy(b);
        if a >= model.n_actions() {
            return Err(Error::InvalidAction(format!("policy chose action {a}")));
        }
        let r = model.mdp().reward(s, a);
        s = sample_discrete(model.mdp().transition_row(s, a), rng);
        let z = sample_discrete(model.obs_row(a, s), rng);
        let next = belief_update(model, b, a, z)?;
        out.beliefs.push(next);
        out.hidden_states.push(s);
        out.actions.push(a);
        out.observations.push(z);
        out.rewards.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn two_state() -> PomdpModel {
        let mdp = FiniteMdp::new(
            vec![vec![vec![0.9, 0.1]], vec![vec![0.2, 0.8]]],
            vec![vec![1.0], vec![0.0]],
            0.9,
        )
        .unwrap();
        PomdpModel::new(mdp, vec![vec![vec![0.7, 0.3], vec![0.3, 0.7]]]).unwrap()
    }

    #[test]
    fn bayes_example() {
        let m = two_state();
        let b = belief_update(&m, &BeliefState::uniform(2), 0, 0).unwrap();
        assert!((b.p[0] - 0.385 / 0.52).abs() < 1e-12);
        assert!((b.p[1] - 0.135 / 0.52).abs() < 1e-12);
        let l = observation_likelihood(&m, &BeliefState::uniform(2), 0, 0).unwrap();
        assert!((l - 0.52).abs() < 1e-12);
    }

    #[test]
    fn impossible_observation_is_an_error() {
        let mdp = FiniteMdp::new(vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]], vec![vec![0.0]; 2], 0.5)
            .unwrap();
        let m = PomdpModel::fully_observable(mdp);
        let err = belief_update(&m, &BeliefState::point(2, 0), 0, 1).unwrap_err();
        assert!(matches!(err, Error::ImpossibleObservation { action: 0, observation: 1 }));
    }

    #[test]
    fn grid_counts_and_vertices() {
        let g = BeliefGrid::new(3, 4).unwrap();
        assert_eq!(g.len(), 15);
        for s in 0..3 {
            assert_eq!(g.points()[g.vertex(s)], BeliefState::point(3, s));
        }
        assert!(BeliefGrid::new(7, 2).is_err());
    }

    #[test]
    fn zero_rewards_give_zero_values() {
        let mdp = FiniteMdp::new(
            vec![vec![vec![0.5, 0.5]; 2], vec![vec![0.1, 0.9]; 2]],
            vec![vec![0.0; 2]; 2],
            0.9,
        )
        .unwrap();
        let m = PomdpModel::fully_observable(mdp);
        let sol = solve_on_grid(&m, &BeliefGrid::new(2, 5).unwrap()).unwrap();
        assert!(sol.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn json_round_trip() {
        let m = two_state();
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("observation_kernel"));
        let back: PomdpModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn zero_horizon_rollout() {
        let m = two_state();
        let r = belief_rollout(&m, |_| 0, &BeliefState::uniform(2), 0, &mut stream(1)).unwrap();
        assert_eq!(r.beliefs.len(), 1);
        assert!(r.actions.is_empty());
    }
}
