use serde::{Deserialize, Serialize};

use super::markov::{check_probability_vector, check_stochastic};
use super::{DiscreteEnv, StepOutcome};
use crate::error::{Error, Result};
use crate::mdp::FiniteMdp;
use crate::rng::{sample_discrete, stream, SimRng};

/// Largest file count for which cache vectors are enumerated.
pub const MAX_FILES: usize = 12;
/// Largest state space `compile_to_mdp` accepts.
pub const MAX_COMPILED_STATES: usize = 10_000;

/// Zipf profile `p_f ∝ (f+1)^(−z)` over files ranked `0..n_files`.
pub fn zipf_profile(n_files: usize, exponent: f64) -> Vec<f64> {
    let w: Vec<f64> = (1..=n_files).map(|f| (f as f64).powf(-exponent)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// All binary vectors of length `n_files` with exactly `cache_size` ones, in
/// lexicographic order of their cached-file index sets.
pub fn enumerate_cache_vectors(n_files: usize, cache_size: usize) -> Vec<Vec<bool>> {
    fn rec(start: usize, n: usize, left: usize, cur: &mut Vec<bool>, out: &mut Vec<Vec<bool>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for f in start..=n - left {
            cur[f] = true;
            rec(f + 1, n, left - 1, cur, out);
            cur[f] = false;
        }
    }
    let mut out = Vec::new();
    if cache_size <= n_files {
        rec(0, n_files, cache_size, &mut vec![false; n_files], &mut out);
    }
    out
}

/// A popularity profile: an explicit vector or a Zipf law over a ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PopularityProfile {
    Explicit(Vec<f64>),
    Zipf {
        zipf_exponent: f64,
        /// File indices from most to least popular; identity when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ranking: Option<Vec<usize>>,
    },
}

impl PopularityProfile {
    pub fn resolve(&self, n_files: usize) -> Result<Vec<f64>> {
        match self {
            PopularityProfile::Explicit(p) => Ok(p.clone()),
            PopularityProfile::Zipf {
                zipf_exponent,
                ranking,
            } => {
                let z = zipf_profile(n_files, *zipf_exponent);
                match ranking {
                    None => Ok(z),
                    Some(order) => {
                        let mut sorted = order.clone();
                        sorted.sort_unstable();
                        if sorted != (0..n_files).collect::<Vec<_>>() {
                            return Err(Error::InvalidModel(
                                "Zipf ranking must be a permutation of the files".into(),
                            ));
                        }
                        let mut p = vec![0.0; n_files];
                        for (rank, &f) in order.iter().enumerate() {
                            p[f] = z[rank];
                        }
                        Ok(p)
                    }
                }
            }
        }
    }
}

/// Base-station cache with Markov-modulated file popularity.
///
/// State `(popularity state, previous cache vector)` is flattened as
/// `p·C + index(a_prev)` with `C = C(F,M)`; actions index the cache vectors
/// of [`enumerate_cache_vectors`]. The per-step cost is
/// `λ1·aᵀ(1−a_prev) + λ2·(1−a)ᵀp(t)`; rewards are its negation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CachingConfig {
    pub n_files: usize,
    pub cache_size: usize,
    pub popularity: Vec<PopularityProfile>,
    pub popularity_transition: Vec<Vec<f64>>,
    pub refresh_weight: f64,
    pub miss_weight: f64,
    pub discount: f64,
}

impl CachingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_files == 0 || self.n_files > MAX_FILES {
            return Err(Error::InvalidModel(format!(
                "n_files {} must be in 1..={MAX_FILES}",
                self.n_files
            )));
        }
        if self.cache_size == 0 || self.cache_size >= self.n_files {
            return Err(Error::InvalidModel(format!(
                "cache_size {} must be in 1..{}",
                self.cache_size, self.n_files
            )));
        }
        let np = self.popularity.len();
        if np == 0 {
            return Err(Error::InvalidModel("popularity: at least one state required".into()));
        }
        for (i, prof) in self.popularity.iter().enumerate() {
            let p = prof.resolve(self.n_files)?;
            check_probability_vector(&p, self.n_files, &format!("popularity[{i}]"))?;
        }
        check_stochastic(&self.popularity_transition, np, "popularity_transition")?;
        if self.refresh_weight < 0.0 || self.miss_weight < 0.0 {
            return Err(Error::InvalidModel("cost weights must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::InvalidModel(format!("discount {} outside [0,1)", self.discount)));
        }
        Ok(())
    }

    pub fn popularity_vectors(&self) -> Result<Vec<Vec<f64>>> {
        self.popularity.iter().map(|p| p.resolve(self.n_files)).collect()
    }

    /// `λ1·aᵀ(1−a_prev) + λ2·(1−a)ᵀp`.
    pub fn cost(&self, popularity: &[f64], a_prev: &[bool], a: &[bool]) -> f64 {
        let refresh = a.iter().zip(a_prev).filter(|(&x, &y)| x && !y).count() as f64;
        let miss: f64 = a
            .iter()
            .zip(popularity)
            .filter(|(&x, _)| !x)
            .map(|(_, &p)| p)
            .sum();
        self.refresh_weight * refresh + self.miss_weight * miss
    }

    /// Exact model with rewards equal to minus the cost.
    pub fn compile_to_mdp(&self) -> Result<FiniteMdp> {
        self.validate()?;
        let vectors = enumerate_cache_vectors(self.n_files, self.cache_size);
        let c = vectors.len();
        let np = self.popularity.len();
        let ns = np * c;
        if ns > MAX_COMPILED_STATES {
            return Err(Error::TooLarge(format!(
                "caching model has {ns} states, limit is {MAX_COMPILED_STATES}"
            )));
        }
        let pops = self.popularity_vectors()?;
        let mut transition = vec![vec![vec![0.0; ns]; c]; ns];
        let mut reward = vec![vec![0.0; c]; ns];
        for p in 0..np {
            for prev in 0..c {
                let s = p * c + prev;
                for a in 0..c {
                    reward[s][a] = -self.cost(&pops[p], &vectors[prev], &vectors[a]);
                    for (p_next, &w) in self.popularity_transition[p].iter().enumerate() {
                        transition[s][a][p_next * c + a] += w;
                    }
                }
            }
        }
        FiniteMdp::new(transition, reward, self.discount)
    }
}

/// Result of one caching decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CachingStep {
    pub cost: f64,
    pub next_state: usize,
    pub popularity_state: usize,
}

#[derive(Debug, Clone)]
pub struct CachingEnv {
    config: CachingConfig,
    popularity: Vec<Vec<f64>>,
    vectors: Vec<Vec<bool>>,
    rng: SimRng,
    pop_state: usize,
    prev: usize,
}

impl CachingEnv {
    pub fn new(config: &CachingConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            popularity: config.popularity_vectors()?,
            vectors: enumerate_cache_vectors(config.n_files, config.cache_size),
            config: config.clone(),
            rng: stream(0),
            pop_state: 0,
            prev: 0,
        })
    }

    pub fn config(&self) -> &CachingConfig {
        &self.config
    }

    pub fn cache_vectors(&self) -> &[Vec<bool>] {
        &self.vectors
    }

    pub fn popularity(&self, p_state: usize) -> &[f64] {
        &self.popularity[p_state]
    }

    pub fn n_popularity_states(&self) -> usize {
        self.popularity.len()
    }

    pub fn popularity_state(&self) -> usize {
        self.pop_state
    }

    pub fn previous_cache(&self) -> &[bool] {
        &self.vectors[self.prev]
    }

    pub fn previous_index(&self) -> usize {
        self.prev
    }

    pub fn decode_state(&self, s: usize) -> (usize, usize) {
        (s / self.vectors.len(), s % self.vectors.len())
    }

    pub fn encode_state(&self, p_state: usize, prev: usize) -> usize {
        p_state * self.vectors.len() + prev
    }

    /// Index of a cache vector; rejects vectors without exactly `M` ones.
    pub fn action_index(&self, a: &[bool]) -> Result<usize> {
        if a.len() != self.config.n_files || a.iter().filter(|&&x| x).count() != self.config.cache_size {
            return Err(Error::InvalidAction(format!(
                "cache vector must have {} entries with exactly {} ones",
                self.config.n_files, self.config.cache_size
            )));
        }
        Ok(self
            .vectors
            .iter()
            .position(|v| v == a)
            .expect("every feasible vector is enumerated"))
    }

    /// Cache the files of action `index`, pay the cost under the current
    /// popularity, then let popularity advance.
    pub fn cache(&mut self, index: usize) -> Result<CachingStep> {
        if index >= self.vectors.len() {
            return Err(Error::InvalidAction(format!("cache action {index} out of range")));
        }
        let cost = self.config.cost(
            &self.popularity[self.pop_state],
            &self.vectors[self.prev],
            &self.vectors[index],
        );
        self.pop_state = sample_discrete(&self.config.popularity_transition[self.pop_state], &mut self.rng);
        self.prev = index;
        Ok(CachingStep {
            cost,
            next_state: self.state(),
            popularity_state: self.pop_state,
        })
    }
}

impl DiscreteEnv for CachingEnv {
    fn n_states(&self) -> usize {
        self.popularity.len() * self.vectors.len()
    }

    fn n_actions(&self) -> usize {
        self.vectors.len()
    }

    /// Popularity state drawn uniformly; the cache starts with the first
    /// enumerated vector.
    fn reset(&mut self, seed: u64) -> usize {
        self.rng = stream(seed);
        let n = self.popularity.len();
        self.pop_state = sample_discrete(&vec![1.0 / n as f64; n], &mut self.rng);
        self.prev = 0;
        self.state()
    }

    fn state(&self) -> usize {
        self.encode_state(self.pop_state, self.prev)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let step = self.cache(action)?;
        Ok(StepOutcome {
            next_state: step.next_state,
            reward: -step.cost,
            terminal: false,
        })
    }
}
