//! Decentralized multi-user channel selection by random ranks.
//!
//! Each user orders the channels by its own indices and senses the channel
//! at its current rank. Users that collide redraw their rank uniformly.

use rand::Rng;

use super::{IndexPolicy, IndexRule};
use crate::envs::{Feedback, UserOutcome};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RankState {
    /// Per user, channels by decreasing index (lowest channel first on ties).
    pub orderings: Vec<Vec<usize>>,
    /// Per user, 1-based rank.
    pub ranks: Vec<usize>,
}

/// Users whose channel is shared redraw a rank uniformly from `1..=pool`;
/// the others keep theirs.
pub fn random_rank_resolve<R: Rng + ?Sized>(choices: &[usize], ranks: &mut [usize], pool: usize, rng: &mut R) {
    for (u, &c) in choices.iter().enumerate() {
        if choices.iter().filter(|&&o| o == c).count() > 1 {
            ranks[u] = rng.random_range(1..=pool);
        }
    }
}

/// `U` users, each with its own index policy over the same `K` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomRankUsers {
    pub users: Vec<IndexPolicy>,
    pub state: RankState,
    /// Redraw range; `K` by default.
    pub pool: usize,
}

impl RandomRankUsers {
    pub fn new(n_users: usize, n_arms: usize, rule: IndexRule) -> Result<Self> {
        Self::with_pool(n_users, n_arms, rule, n_arms)
    }

    /// Ranks redrawn from `1..=pool` instead of `1..=K`.
    pub fn with_pool(n_users: usize, n_arms: usize, rule: IndexRule, pool: usize) -> Result<Self> {
        if n_users == 0 || n_users > n_arms {
            return Err(Error::Contract(format!(
                "need 1 ≤ users ≤ channels, got {n_users} users and {n_arms} channels"
            )));
        }
        if pool == 0 || pool > n_arms {
            return Err(Error::Contract(format!("rank pool {pool} must be in 1..={n_arms}")));
        }
        Ok(Self {
            users: (0..n_users)
                .map(|_| IndexPolicy::new(n_arms, rule))
                .collect::<Result<_>>()?,
            state: RankState {
                orderings: vec![(0..n_arms).collect(); n_users],
                ranks: (0..n_users).map(|u| u % pool + 1).collect(),
            },
            pool,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_arms(&self) -> usize {
        self.users[0].stats.len()
    }

    /// Channel of every user at 0-based round `t`. During the first `K`
    /// rounds user `u` senses channel `(t + u) mod K`, which visits every
    /// channel once without collisions.
    pub fn choose(&mut self, t: usize) -> Vec<usize> {
        let k = self.n_arms();
        (0..self.users.len())
            .map(|u| {
                let policy = &self.users[u];
                if policy.unexplored().is_some() {
                    return (t + u) % k;
                }
                let idx = policy.indices().expect("all channels explored");
                let mut order: Vec<usize> = (0..k).collect();
                order.sort_by(|&a, &b| idx[b].total_cmp(&idx[a]).then(a.cmp(&b)));
                let c = order[self.state.ranks[u] - 1];
                self.state.orderings[u] = order;
                c
            })
            .collect()
    }

    /// Update every user from what it sensed, then resolve collisions.
    /// Statistics use the sensed data rate even when the transmission
    /// collided.
    pub fn observe<R: Rng + ?Sized>(&mut self, outcomes: &[UserOutcome], rng: &mut R) -> Result<()> {
        if outcomes.len() != self.users.len() {
            return Err(Error::Contract("one outcome per user expected".into()));
        }
        for (policy, o) in self.users.iter_mut().zip(outcomes) {
            let fb = Feedback {
                reward: o.rate,
                available: o.state.is_free(),
                quality: o.rate,
                observation: o.state.index(),
            };
            policy.stats[o.channel].record(&fb);
        }
        let choices: Vec<usize> = outcomes.iter().map(|o| o.channel).collect();
        random_rank_resolve(&choices, &mut self.state.ranks, self.pool, rng);
        Ok(())
    }

    /// Last index value of `user` on `channel`, once all channels are explored.
    pub fn index_value(&self, user: usize, channel: usize) -> Option<f64> {
        self.users[user].indices().map(|v| v[channel])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn distinct_choices_keep_ranks() {
        let mut ranks = vec![1, 3];
        random_rank_resolve(&[0, 2], &mut ranks, 4, &mut stream(0));
        assert_eq!(ranks, vec![1, 3]);
    }

    #[test]
    fn collisions_redraw_within_pool() {
        let mut rng = stream(7);
        for _ in 0..200 {
            let mut ranks = vec![2, 2];
            random_rank_resolve(&[1, 1], &mut ranks, 4, &mut rng);
            assert!(ranks.iter().all(|r| (1..=4).contains(r)));
        }
    }

    #[test]
    fn initialization_is_collision_free() {
        let mut users = RandomRankUsers::new(3, 4, IndexRule::Ucb1).unwrap();
        for t in 0..4 {
            let c = users.choose(t);
            let mut sorted = c.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), 3);
        }
        assert!(RandomRankUsers::new(5, 4, IndexRule::Ucb1).is_err());
    }
}
