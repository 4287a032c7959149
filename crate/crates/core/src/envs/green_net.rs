use serde::{Deserialize, Serialize};

use super::{BanditEnv, Feedback, Oracle};
use crate::error::{Error, Result};

/// Largest supported number of base stations.
pub const MAX_BASE_STATIONS: usize = 12;

/// Per-cell figures of one on/off configuration, listed for the active cells
/// in ascending base-station order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigurationEntry {
    pub throughput: Vec<f64>,
    pub power: Vec<f64>,
    pub load: Vec<f64>,
}

/// Static description of one base station, used by
/// [`GreenNetConfig::from_cells`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseStationSpec {
    /// Throughput at full load.
    pub capacity: f64,
    pub static_power: f64,
    /// Additional power per unit load.
    pub load_power: f64,
}

/// Base-station switching. Action `i` switches on the base stations in the
/// bit mask `i + 1`, so the all-off configuration is not an action.
///
/// A configuration is feasible when every active load is at most
/// `load_threshold` and the total throughput is at least `min_throughput`.
/// A feasible configuration pays its energy efficiency `Σ_k Θ_k / P_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenNetConfig {
    pub n_bs: usize,
    /// One entry per action, `2^Y − 1` in total.
    pub configurations: Vec<ConfigurationEntry>,
    pub load_threshold: f64,
    pub min_throughput: f64,
}

impl GreenNetConfig {
    pub fn n_actions(&self) -> usize {
        (1usize << self.n_bs) - 1
    }

    /// On/off vector of action `a`.
    pub fn mask(a: usize, n_bs: usize) -> Vec<bool> {
        (0..n_bs).map(|k| (a + 1) >> k & 1 == 1).collect()
    }

    /// Build the tables from per-cell specs: the active cells share
    /// `total_demand` in proportion to their capacities.
    pub fn from_cells(
        cells: &[BaseStationSpec],
        total_demand: f64,
        load_threshold: f64,
        min_throughput: f64,
    ) -> Result<Self> {
        let n_bs = cells.len();
        if n_bs == 0 || n_bs > MAX_BASE_STATIONS {
            return Err(Error::InvalidModel(format!(
                "number of base stations must be in 1..={MAX_BASE_STATIONS}"
            )));
        }
        let configurations = (0..(1usize << n_bs) - 1)
            .map(|a| {
                let active: Vec<&BaseStationSpec> = Self::mask(a, n_bs)
                    .into_iter()
                    .zip(cells)
                    .filter_map(|(on, c)| on.then_some(c))
                    .collect();
                let capacity: f64 = active.iter().map(|c| c.capacity).sum();
                let load = total_demand / capacity;
                ConfigurationEntry {
                    throughput: active.iter().map(|c| c.capacity * load.min(1.0)).collect(),
                    power: active.iter().map(|c| c.static_power + c.load_power * load).collect(),
                    load: vec![load; active.len()],
                }
            })
            .collect();
        let cfg = Self {
            n_bs,
            configurations,
            load_threshold,
            min_throughput,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bs == 0 || self.n_bs > MAX_BASE_STATIONS {
            return Err(Error::InvalidModel(format!(
                "n_bs {} must be in 1..={MAX_BASE_STATIONS}",
                self.n_bs
            )));
        }
        if self.configurations.len() != self.n_actions() {
            return Err(Error::InvalidModel(format!(
                "configurations has {} entries, expected {}",
                self.configurations.len(),
                self.n_actions()
            )));
        }
        for (a, e) in self.configurations.iter().enumerate() {
            let active = (a + 1).count_ones() as usize;
            if e.throughput.len() != active || e.power.len() != active || e.load.len() != active {
                return Err(Error::InvalidModel(format!(
                    "configurations[{a}] must list {active} active cells"
                )));
            }
            if e.power.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
                return Err(Error::InvalidModel(format!("configurations[{a}]: power must be positive")));
            }
            if e.throughput.iter().chain(&e.load).any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "configurations[{a}]: throughput and load must be non-negative"
                )));
            }
        }
        Ok(())
    }

    pub fn feasible(&self, a: usize) -> bool {
        let e = &self.configurations[a];
        e.load.iter().all(|&l| l <= self.load_threshold)
            && e.throughput.iter().sum::<f64>() >= self.min_throughput
    }

    /// Energy efficiency `Σ_k Θ_k / P_k`, regardless of feasibility.
    pub fn energy_efficiency(&self, a: usize) -> f64 {
        let e = &self.configurations[a];
        e.throughput.iter().zip(&e.power).map(|(t, p)| t / p).sum()
    }

    /// Reward of every action: EE when feasible, 0 otherwise.
    pub fn rewards(&self) -> Vec<f64> {
        (0..self.n_actions())
            .map(|a| if self.feasible(a) { self.energy_efficiency(a) } else { 0.0 })
            .collect()
    }

    /// Exhaustive-search best feasible action, if any.
    pub fn best_feasible(&self) -> Option<usize> {
        (0..self.n_actions())
            .filter(|&a| self.feasible(a))
            .fold(None, |best: Option<usize>, a| match best {
                Some(b) if self.energy_efficiency(b) >= self.energy_efficiency(a) => Some(b),
                _ => Some(a),
            })
    }
}

#[derive(Debug, Clone)]
pub struct GreenNetEnv {
    config: GreenNetConfig,
    rewards: Vec<f64>,
    best_reward: f64,
}

impl GreenNetEnv {
    pub fn new(config: &GreenNetConfig) -> Result<Self> {
        config.validate()?;
        let rewards = config.rewards();
        let best_reward = rewards.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            config: config.clone(),
            rewards,
            best_reward,
        })
    }

    pub fn config(&self) -> &GreenNetConfig {
        &self.config
    }
}

impl BanditEnv for GreenNetEnv {
    fn n_arms(&self) -> usize {
        self.config.n_actions()
    }

    fn reset(&mut self, _seed: u64) {}

    /// Observation is the feasibility state; quality is the EE normalized by
    /// the best feasible EE.
    fn pull(&mut self, arm: usize) -> Result<Feedback> {
        if arm >= self.rewards.len() {
            return Err(Error::InvalidAction(format!("configuration {arm} out of range")));
        }
        let feasible = self.config.feasible(arm);
        let reward = self.rewards[arm];
        Ok(Feedback {
            reward,
            available: feasible,
            quality: if self.best_reward > 0.0 { reward / self.best_reward } else { 0.0 },
            observation: feasible as usize,
        })
    }

    fn oracle(&self) -> Oracle {
        Oracle::Means(self.rewards.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells() -> Vec<BaseStationSpec> {
        vec![
            BaseStationSpec {
                capacity: 10.0,
                static_power: 4.0,
                load_power: 2.0,
            };
            2
        ]
    }

    #[test]
    fn two_stations_three_actions() {
        let cfg = GreenNetConfig::from_cells(&cells(), 8.0, 1.0, 0.0).unwrap();
        assert_eq!(cfg.n_actions(), 3);
        assert_eq!(GreenNetConfig::mask(0, 2), vec![true, false]);
        assert_eq!(GreenNetConfig::mask(2, 2), vec![true, true]);
    }

    #[test]
    fn overloaded_configuration_is_infeasible() {
        let cfg = GreenNetConfig::from_cells(&cells(), 12.0, 1.0, 0.0).unwrap();
        assert!(!cfg.feasible(0));
        assert!(cfg.feasible(2));
        let mut env = GreenNetEnv::new(&cfg).unwrap();
        let fb = env.pull(0).unwrap();
        assert_eq!((fb.reward, fb.observation), (0.0, 0));
        assert!(env.pull(2).unwrap().reward > 0.0);
    }

    #[test]
    fn wrong_table_size_rejected() {
        let mut cfg = GreenNetConfig::from_cells(&cells(), 8.0, 1.0, 0.0).unwrap();
        cfg.configurations.pop();
        assert!(cfg.validate().is_err());
    }
}
