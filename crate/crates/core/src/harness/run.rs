use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use super::{AgentSpec, ExperimentConfig};
use crate::bandits::{
    lai_robbins_coefficients, lower_bound_curve, regret_from_counts, write_decisions_csv, BanditPolicy,
    DecisionRecord, Exp3Policy, IndexPolicy, RandomRankUsers, RcaPolicy, ThompsonPolicy, UniformPolicy,
};
use crate::envs::{
    write_trace_csv, AdversarialEnv, BanditEnv, BernoulliChannelsEnv, CachingEnv, DiscreteEnv, EnvConfig,
    GilbertElliotEnv, GreenNetEnv, LinkBufferEnv, MdpEnv, Oracle, TraceRecord,
};
use crate::error::{Error, Result};
use crate::linear_fa::{caching_greedy, caching_semi_gradient_step, CachingFeatureParams, CachingTransition};
use crate::mdp::{optimal_q, QTable, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::rng::{derive_seed, stream, SimRng};
use crate::tabular::{train_observed, TabularAgent};

/// One line of `rounds.csv`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RoundRow {
    pub replication: usize,
    pub t: usize,
    pub actor: usize,
    pub action: usize,
    pub reward: f64,
    pub cumulative_regret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    pub replication: usize,
    pub seed: u64,
    /// Rounds completed before the end or the first error.
    pub rounds: usize,
    pub final_regret: f64,
    pub reward_sum: f64,
    /// Times each action was taken, summed over actors.
    pub pull_counts: Vec<u64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub summary: ReplicationSummary,
    pub rounds: Vec<RoundRow>,
    pub decisions: Vec<DecisionRecord>,
    pub trace: Vec<TraceRecord>,
}

/// Mean over successful replications with a normal-approximation 95%
/// confidence half-width.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub n: usize,
    pub failed: usize,
    pub final_regret_mean: f64,
    pub final_regret_ci95: f64,
    pub reward_sum_mean: f64,
    pub reward_sum_ci95: f64,
    pub mean_pull_counts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub replications: Vec<ReplicationSummary>,
    pub aggregate: Aggregate,
}

fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}

/// Aggregate replication summaries, skipping failed ones.
pub fn summarize(reps: &[ReplicationSummary]) -> Aggregate {
    let ok: Vec<&ReplicationSummary> = reps.iter().filter(|r| r.error.is_none()).collect();
    let regrets: Vec<f64> = ok.iter().map(|r| r.final_regret).collect();
    let rewards: Vec<f64> = ok.iter().map(|r| r.reward_sum).collect();
    let (final_regret_mean, final_regret_ci95) = mean_ci(&regrets);
    let (reward_sum_mean, reward_sum_ci95) = mean_ci(&rewards);
    let width = reps.first().map_or(0, |r| r.pull_counts.len());
    let mean_pull_counts = (0..width)
        .map(|i| ok.iter().map(|r| r.pull_counts[i] as f64).sum::<f64>() / ok.len().max(1) as f64)
        .collect();
    Aggregate {
        n: ok.len(),
        failed: reps.len() - ok.len(),
        final_regret_mean,
        final_regret_ci95,
        reward_sum_mean,
        reward_sum_ci95,
        mean_pull_counts,
    }
}

/// Configuration plus everything shared by its replications.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    /// Optimal action values of finite-state environments; per-step regret
    /// is the action gap `max_a q*(s,a) − q*(s,a_t)`.
    optimal: Option<QTable>,
}

struct Recorder {
    replication: usize,
    want_decisions: bool,
    want_trace: bool,
    out: ReplicationOutcome,
}

impl Recorder {
    fn row(&mut self, t: usize, actor: usize, action: usize, reward: f64, regret: f64) {
        self.out.rounds.push(RoundRow {
            replication: self.replication,
            t,
            actor,
            action,
            reward,
            cumulative_regret: regret,
        });
        self.out.summary.reward_sum += reward;
        self.out.summary.pull_counts[action] += 1;
        self.out.summary.final_regret = regret;
    }

    fn decision(&mut self, t: usize, user: usize, arm: usize, index_value: Option<f64>, reward: f64, collided: bool) {
        if self.want_decisions {
            self.out.decisions.push(DecisionRecord {
                t,
                user,
                arm,
                index_value,
                reward,
                collided,
            });
        }
    }

    fn trace(&mut self, t: usize, actor: usize, action: usize, state_or_obs: usize, reward: f64, info: &str) {
        if self.want_trace {
            self.out.trace.push(TraceRecord {
                t,
                actor,
                action,
                state_or_obs,
                reward,
                info: info.to_string(),
            });
        }
    }
}

fn bandit_env(env: &EnvConfig) -> Result<Box<dyn BanditEnv + Send>> {
    Ok(match env {
        EnvConfig::Bernoulli(c) => Box::new(BernoulliChannelsEnv::new(c)?),
        EnvConfig::GilbertElliot(c) => Box::new(GilbertElliotEnv::new(c)?),
        EnvConfig::GreenNet(c) => Box::new(GreenNetEnv::new(c)?),
        EnvConfig::Adversarial(c) => Box::new(AdversarialEnv::new(c)?),
        other => return Err(Error::Contract(format!("`{}` is not a bandit environment", other.id()))),
    })
}

fn discrete_env(env: &EnvConfig) -> Result<(Box<dyn DiscreteEnv + Send>, f64)> {
    Ok(match env {
        EnvConfig::LinkBuffer(c) => (Box::new(LinkBufferEnv::new(c)?), c.discount),
        EnvConfig::Caching(c) => (Box::new(CachingEnv::new(c)?), c.discount),
        EnvConfig::Mdp(c) => {
            let mut e = MdpEnv::new(c.model.clone());
            if let Some(s) = c.start_state {
                e = e.with_start_state(s)?;
            }
            (Box::new(e), c.model.discount())
        }
        other => return Err(Error::Contract(format!("`{}` is not a finite-state environment", other.id()))),
    })
}

fn bandit_policy(spec: &AgentSpec, env: &EnvConfig, n_arms: usize, horizon: usize) -> Result<Box<dyn BanditPolicy>> {
    Ok(match spec {
        AgentSpec::Index(rule) => Box::new(IndexPolicy::new(n_arms, *rule)?),
        AgentSpec::Thompson => Box::new(ThompsonPolicy::new(n_arms)?),
        AgentSpec::Exp3 { gamma } => Box::new(Exp3Policy::new(
            n_arms,
            gamma.unwrap_or_else(|| Exp3Policy::tuned_gamma(n_arms, horizon)),
        )?),
        AgentSpec::Rca {
            rule,
            regenerative_states,
        } => {
            // Free-high for channels, "success" for binary observations.
            let default = match env {
                EnvConfig::GilbertElliot(_) => 2,
                EnvConfig::Adversarial(_) => 0,
                _ => 1,
            };
            let xi = regenerative_states.clone().unwrap_or_else(|| vec![default; n_arms]);
            Box::new(RcaPolicy::new(*rule, xi)?)
        }
        AgentSpec::Uniform => Box::new(UniformPolicy::new(n_arms)?),
        _ => return Err(Error::Contract("agent is not a single-user bandit policy".into())),
    })
}

impl Prepared {
    /// Precompute shared reference quantities. Finite-state environments too
    /// large to compile get no regret reference (NaN regret).
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let compiled = match &config.env {
            EnvConfig::LinkBuffer(c) => Some(c.compile_to_mdp()),
            EnvConfig::Caching(c) => Some(c.compile_to_mdp()),
            EnvConfig::Mdp(c) => Some(Ok(c.model.clone())),
            _ => None,
        };
        let optimal = match compiled {
            Some(Ok(mdp)) => Some(optimal_q(&mdp, DEFAULT_TOL, DEFAULT_MAX_ITER)?),
            Some(Err(Error::TooLarge(_))) | None => None,
            Some(Err(e)) => return Err(e),
        };
        Ok(Self {
            config: config.clone(),
            optimal,
        })
    }

    /// Seed of replication `i`.
    pub fn replication_seed(&self, i: usize) -> u64 {
        derive_seed(self.config.master_seed, i as u64)
    }

    fn n_actions(&self) -> usize {
        match &self.config.env {
            EnvConfig::Bernoulli(c) => c.success_probs.len(),
            EnvConfig::GilbertElliot(c) => c.n_channels(),
            EnvConfig::GreenNet(c) => c.n_actions(),
            EnvConfig::Adversarial(c) => c.rewards.len(),
            EnvConfig::LinkBuffer(c) => c.n_actions(),
            EnvConfig::Caching(c) => crate::envs::enumerate_cache_vectors(c.n_files, c.cache_size).len(),
            EnvConfig::Mdp(c) => c.model.n_actions(),
        }
    }

    /// Run replication `i` in memory. Environment and agent errors end the
    /// replication early and are reported in its summary.
    pub fn run_replication(&self, i: usize) -> ReplicationOutcome {
        let seed = self.replication_seed(i);
        let mut rec = Recorder {
            replication: i,
            want_decisions: self.config.outputs.decisions,
            want_trace: self.config.outputs.env_trace,
            out: ReplicationOutcome {
                summary: ReplicationSummary {
                    replication: i,
                    seed,
                    rounds: 0,
                    final_regret: 0.0,
                    reward_sum: 0.0,
                    pull_counts: vec![0; self.n_actions()],
                    error: None,
                },
                rounds: Vec::new(),
                decisions: Vec::new(),
                trace: Vec::new(),
            },
        };
        let env_seed = derive_seed(seed, 0);
        let mut rng = stream(derive_seed(seed, 1));
        let result = match &self.config.spec {
            AgentSpec::RandomRank { rule, pool } => self.run_multi_user(*rule, *pool, env_seed, &mut rng, &mut rec),
            AgentSpec::Tabular(_) => self.run_tabular(env_seed, &mut rng, &mut rec),
            AgentSpec::LinearCaching(_) => self.run_linear_caching(env_seed, &mut rng, &mut rec),
            _ => self.run_bandit(env_seed, &mut rng, &mut rec),
        };
        if let Err(e) = result {
            rec.out.summary.error = Some(e.to_string());
        }
        rec.out
    }

    fn run_bandit(&self, env_seed: u64, rng: &mut SimRng, rec: &mut Recorder) -> Result<()> {
        let cfg = &self.config;
        let mut env = bandit_env(&cfg.env)?;
        env.reset(env_seed);
        let k = env.n_arms();
        let mut policy = bandit_policy(&cfg.spec, &cfg.env, k, cfg.horizon)?;
        let oracle = env.oracle();
        let mut counts = vec![0u64; k];
        let mut regret = 0.0;
        let best_in_hindsight = match &oracle {
            Oracle::Sequence(r) => {
                let totals: Vec<f64> = r.iter().map(|row| row[..cfg.horizon].iter().sum()).collect();
                Some(crate::mdp::argmax(&totals))
            }
            Oracle::Means(_) => None,
        };
        for t in 0..cfg.horizon {
            let arm = policy.select(t, rng);
            let fb = env
                .pull(arm)
                .map_err(|e| Error::EnvStep { step: t, source: Box::new(e) })?;
            let index_value = policy.last_index(arm);
            policy.update(arm, &fb)?;
            counts[arm] += 1;
            regret = match (&oracle, best_in_hindsight) {
                (Oracle::Means(m), _) => regret_from_counts(&counts, m),
                (Oracle::Sequence(_), Some(best)) => {
                    regret + oracle.expected_reward(best, t) - oracle.expected_reward(arm, t)
                }
                (Oracle::Sequence(_), None) => unreachable!("best arm computed for sequences"),
            };
            rec.row(t, 0, arm, fb.reward, regret);
            rec.decision(t, 0, arm, index_value, fb.reward, false);
            let info = if fb.available { "available" } else { "" };
            rec.trace(t, 0, arm, fb.observation, fb.reward, info);
            rec.out.summary.rounds = t + 1;
        }
        Ok(())
    }

    fn run_multi_user(
        &self,
        rule: crate::bandits::IndexRule,
        pool: Option<usize>,
        env_seed: u64,
        rng: &mut SimRng,
        rec: &mut Recorder,
    ) -> Result<()> {
        let EnvConfig::GilbertElliot(c) = &self.config.env else {
            return Err(Error::Contract("random_rank needs gilbert_elliot channels".into()));
        };
        let mut env = GilbertElliotEnv::new(c)?;
        env.reset(env_seed);
        let k = c.n_channels();
        let mut users = RandomRankUsers::with_pool(c.n_users, k, rule, pool.unwrap_or(k))?;
        let Oracle::Means(means) = env.oracle() else {
            unreachable!("channels report stationary means")
        };
        let mut sorted = means.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let best_sum: f64 = sorted[..c.n_users].iter().sum();
        let mut regret = 0.0;
        for t in 0..self.config.horizon {
            let choices = users.choose(t);
            let indices: Vec<Option<f64>> = choices
                .iter()
                .enumerate()
                .map(|(u, &ch)| users.index_value(u, ch))
                .collect();
            let outcomes = env
                .step_users(&choices)
                .map_err(|e| Error::EnvStep { step: t, source: Box::new(e) })?;
            users.observe(&outcomes, rng)?;
            let earned: f64 = outcomes
                .iter()
                .filter(|o| !o.collided)
                .map(|o| means[o.channel])
                .sum();
            regret += best_sum - earned;
            for (u, o) in outcomes.iter().enumerate() {
                rec.row(t, u, o.channel, o.reward, regret);
                rec.decision(t, u, o.channel, indices[u], o.reward, o.collided);
                let info = if o.collided { "collided" } else { "" };
                rec.trace(t, u, o.channel, o.state.index(), o.reward, info);
            }
            rec.out.summary.rounds = t + 1;
        }
        Ok(())
    }

    fn gap(&self, s: usize, a: usize) -> f64 {
        self.optimal.as_ref().map_or(f64::NAN, |q| q.max(s) - q.get(s, a))
    }

    fn run_tabular(&self, env_seed: u64, rng: &mut SimRng, rec: &mut Recorder) -> Result<()> {
        let AgentSpec::Tabular(p) = &self.config.spec else {
            unreachable!("dispatched on tabular agents")
        };
        let (mut env, env_discount) = discrete_env(&self.config.env)?;
        env.reset(env_seed);
        let mut agent = TabularAgent::new(
            env.n_states(),
            env.n_actions(),
            p.variant,
            p.discount.unwrap_or(env_discount),
            p.lr,
            p.exploration,
        )?
        .with_initial_value(p.initial_value)
        .with_rate_clock(p.rate_clock);
        let mut regret = 0.0;
        let mut t = 0;
        train_observed(&mut agent, env.as_mut(), self.config.horizon, rng, |x| {
            regret += self.gap(x.s, x.a);
            rec.row(t, 0, x.a, x.r, regret);
            rec.decision(t, 0, x.a, None, x.r, false);
            rec.trace(t, 0, x.a, x.s, x.r, if x.terminal { "terminal" } else { "" });
            t += 1;
            rec.out.summary.rounds = t;
        })
    }

    fn run_linear_caching(&self, env_seed: u64, rng: &mut SimRng, rec: &mut Recorder) -> Result<()> {
        let (AgentSpec::LinearCaching(p), EnvConfig::Caching(c)) = (&self.config.spec, &self.config.env) else {
            unreachable!("dispatched on linear caching agents")
        };
        let mut env = CachingEnv::new(c)?;
        DiscreteEnv::reset(&mut env, env_seed);
        let candidates = env.cache_vectors().to_vec();
        let mut params = CachingFeatureParams::zeros(env.n_popularity_states(), c.n_files);
        let mut regret = 0.0;
        for t in 0..self.config.horizon {
            let s = DiscreteEnv::state(&env);
            let (pop, prev) = (env.popularity_state(), env.previous_index());
            let a = if rng.random::<f64>() < p.exploration.epsilon(t as u64) {
                rng.random_range(0..candidates.len())
            } else {
                caching_greedy(&params, pop, &candidates[prev], &candidates)?
            };
            let step = env
                .cache(a)
                .map_err(|e| Error::EnvStep { step: t, source: Box::new(e) })?;
            caching_semi_gradient_step(
                &mut params,
                step.cost,
                CachingTransition {
                    p: pop,
                    a_prev: &candidates[prev],
                    a: &candidates[a],
                    p_next: step.popularity_state,
                },
                &candidates,
                p.lr.rate(t as u64),
                c.discount,
            )?;
            regret += self.gap(s, a);
            rec.row(t, 0, a, -step.cost, regret);
            rec.decision(t, 0, a, None, -step.cost, false);
            rec.trace(t, 0, a, s, -step.cost, "");
            rec.out.summary.rounds = t + 1;
        }
        Ok(())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn fmt_counts<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

fn write_summary(path: &Path, reps: &[ReplicationSummary], agg: &Aggregate) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "replication",
        "seed",
        "rounds",
        "final_regret",
        "final_regret_ci95",
        "reward_sum",
        "reward_sum_ci95",
        "pull_counts",
        "error",
    ])?;
    for r in reps {
        w.write_record([
            r.replication.to_string(),
            r.seed.to_string(),
            r.rounds.to_string(),
            r.final_regret.to_string(),
            String::new(),
            r.reward_sum.to_string(),
            String::new(),
            fmt_counts(&r.pull_counts),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.write_record([
        "aggregate".to_string(),
        String::new(),
        agg.n.to_string(),
        agg.final_regret_mean.to_string(),
        agg.final_regret_ci95.to_string(),
        agg.reward_sum_mean.to_string(),
        agg.reward_sum_ci95.to_string(),
        fmt_counts(&agg.mean_pull_counts),
        if agg.failed > 0 {
            format!("{} replication(s) failed", agg.failed)
        } else {
            String::new()
        },
    ])?;
    w.flush()?;
    Ok(())
}

/// Run every replication and write
///
/// * `rounds.csv`: `replication,t,actor,action,reward,cumulative_regret`;
/// * `summary.csv`: one row per replication and a final `aggregate` row;
/// * `decisions_<i>.csv` and `trace_<i>.csv` per replication when enabled.
///
/// Replications run in parallel; files are written in replication order.
pub fn run_experiment(config: &ExperimentConfig, output_dir: &Path) -> Result<RunSummary> {
    fs::create_dir_all(output_dir)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", output_dir.display()))))?;
    let prepared = Prepared::new(config)?;
    let mut rounds = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(create(&output_dir.join("rounds.csv"))?);
    rounds.write_record(["replication", "t", "actor", "action", "reward", "cumulative_regret"])?;
    let chunk = rayon::current_num_threads().max(1) * 2;
    let mut summaries = Vec::with_capacity(config.replications);
    let ids: Vec<usize> = (0..config.replications).collect();
    for block in ids.chunks(chunk) {
        let outcomes: Vec<ReplicationOutcome> = block.par_iter().map(|&i| prepared.run_replication(i)).collect();
        for o in outcomes {
            for row in &o.rounds {
                rounds.serialize(row)?;
            }
            let i = o.summary.replication;
            if config.outputs.decisions {
                write_decisions_csv(create(&output_dir.join(format!("decisions_{i}.csv")))?, &o.decisions)?;
            }
            if config.outputs.env_trace {
                write_trace_csv(create(&output_dir.join(format!("trace_{i}.csv")))?, &o.trace)?;
            }
            summaries.push(o.summary);
        }
    }
    rounds.flush()?;
    let aggregate = summarize(&summaries);
    write_summary(&output_dir.join("summary.csv"), &summaries, &aggregate)?;
    Ok(RunSummary {
        output_dir: output_dir.to_path_buf(),
        replications: summaries,
        aggregate,
    })
}

/// Write the Lai-Robbins lower bound `t,lower_bound` for `t = 1..=horizon`
/// of a Bernoulli configuration. Arms tied with the best have an infinite
/// coefficient; they are left out of the bound and a `#warning` row naming
/// them precedes the data.
pub fn emit_bound_curve<W: Write>(config: &ExperimentConfig, out: W) -> Result<()> {
    let EnvConfig::Bernoulli(c) = &config.env else {
        return Err(Error::Contract(format!(
            "the lower bound needs Bernoulli channels, got `{}`",
            config.env.id()
        )));
    };
    let means = &c.success_probs;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "lower_bound"])?;
    let tied: Vec<String> = lai_robbins_coefficients(means)?
        .into_iter()
        .filter(|(_, coef)| coef.is_infinite())
        .map(|(i, _)| i.to_string())
        .collect();
    if !tied.is_empty() {
        w.write_record([
            "#warning".to_string(),
            format!("arms {} tie the best mean and are excluded", tied.join(";")),
        ])?;
    }
    for t in 1..=config.horizon {
        w.write_record([t.to_string(), lower_bound_curve(means, t as f64)?.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::parse_config;

    fn config(agent: &str) -> ExperimentConfig {
        parse_config(&format!(
            r#"{{"name":"t","env":{{"type":"bernoulli","success_probs":[0.3,0.7]}},
                "agent":{{"id":"{agent}"}},"horizon":40,"replications":3,"master_seed":11}}"#
        ))
        .unwrap()
    }

    #[test]
    fn replications_are_reproducible() {
        let p = Prepared::new(&config("thompson")).unwrap();
        assert_eq!(p.run_replication(1), p.run_replication(1));
        assert_ne!(p.run_replication(0).rounds, p.run_replication(1).rounds);
    }

    #[test]
    fn counts_sum_to_horizon() {
        let p = Prepared::new(&config("ucb1")).unwrap();
        let o = p.run_replication(0);
        assert_eq!(o.summary.pull_counts.iter().sum::<u64>(), 40);
        assert!(o.summary.error.is_none());
    }

    #[test]
    fn ci_of_constant_sample_is_zero() {
        assert_eq!(mean_ci(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        let (m, h) = mean_ci(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((h - 1.96).abs() < 1e-12);
    }

    #[test]
    fn bound_curve_warns_on_ties() {
        let mut cfg = config("ucb1");
        cfg.env = EnvConfig::Bernoulli(crate::envs::BernoulliChannelsConfig {
            success_probs: vec![0.5, 0.5, 0.2],
        });
        cfg.horizon = 3;
        let mut buf = Vec::new();
        emit_bound_curve(&cfg, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("#warning,arms 1 "));
        assert_eq!(text.lines().count(), 5);
    }
}
