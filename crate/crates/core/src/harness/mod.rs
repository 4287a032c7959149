//! Configuration-driven experiments.
//!
//! An experiment binds one agent to one environment and runs independent
//! replications. Replication `i` is seeded with `derive_seed(master_seed, i)`;
//! inside it, the environment uses sub-seed 0 and the agent sub-seed 1.
//! Outputs are CSV files written in replication order, so they do not depend
//! on how replications were scheduled.

mod run;

use std::fmt;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::bandits::{GKind, IndexRule, KLUCB_PRECISION};
use crate::envs::EnvConfig;
use crate::tabular::{ExplorationSchedule, LearningRateSchedule, RateClock, Variant};

pub use run::{
    emit_bound_curve, run_experiment, summarize, Aggregate, Prepared, ReplicationOutcome, ReplicationSummary,
    RoundRow, RunSummary,
};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "PHYBANDIT_OUTPUT_DIR";

/// Registered agent ids with a one-line description, in stable order.
pub const ALGORITHMS: [(&str, &str); 13] = [
    ("ucb1", "UCB1 index policy"),
    ("klucb", "KL-UCB index policy for Bernoulli rewards"),
    ("oksanen", "mean plus concave exploration g(t/n)"),
    ("rqos_ucb", "availability index penalized by quality gap"),
    ("thompson", "Thompson sampling with Beta posteriors"),
    ("exp3", "exponential weights for adversarial rewards"),
    ("rca_ucb1", "regenerative cycle algorithm wrapping UCB1"),
    ("random_rank", "multi-user random rank over per-user indices"),
    ("uniform", "uniformly random arm (baseline)"),
    ("q_learning", "tabular Q-learning"),
    ("sarsa", "tabular SARSA"),
    ("double_q", "tabular double Q-learning"),
    ("linear_caching", "semi-gradient caching cost model"),
];

pub fn algorithm_ids() -> Vec<&'static str> {
    ALGORITHMS.iter().map(|(id, _)| *id).collect()
}

/// Every violation found while reading a configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors {
    pub errors: Vec<String>,
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.errors.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Agent id plus its free-form parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub id: String,
    #[serde(default, skip_serializing_if = "is_empty_object")]
    pub params: Value,
}

fn is_empty_object(v: &Value) -> bool {
    v.is_null() || v.as_object().is_some_and(Map::is_empty)
}

/// Which files to write besides `rounds.csv` and `summary.csv`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputOptions {
    /// `decisions.csv`: t, user, arm, index_value, reward, collided.
    #[serde(default)]
    pub decisions: bool,
    /// `trace.csv`: t, actor, action, state_or_obs, reward, info.
    #[serde(default)]
    pub env_trace: bool,
}

fn is_default_outputs(o: &OutputOptions) -> bool {
    *o == OutputOptions::default()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub horizon: usize,
    pub replications: usize,
    pub master_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "is_default_outputs")]
    pub outputs: OutputOptions,
    #[serde(skip)]
    pub spec: AgentSpec,
}

impl ExperimentConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration is serializable")
    }

    /// Output directory: the configured one, else `$PHYBANDIT_OUTPUT_DIR`,
    /// else `phybandit-output`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("phybandit-output"))
    }
}

/// Fully parsed agent.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentSpec {
    Index(IndexRule),
    Thompson,
    Exp3 { gamma: Option<f64> },
    Rca { rule: IndexRule, regenerative_states: Option<Vec<usize>> },
    RandomRank { rule: IndexRule, pool: Option<usize> },
    Uniform,
    Tabular(TabularParams),
    LinearCaching(LinearCachingParams),
}

impl Default for AgentSpec {
    fn default() -> Self {
        AgentSpec::Index(IndexRule::Ucb1)
    }
}

impl AgentSpec {
    fn is_bandit(&self) -> bool {
        !matches!(self, AgentSpec::Tabular(_) | AgentSpec::LinearCaching(_))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoParams {}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct KlUcbParams {
    #[serde(default = "klucb_precision")]
    precision: f64,
}

fn klucb_precision() -> f64 {
    KLUCB_PRECISION
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct OksanenParams {
    #[serde(default)]
    g: GKind,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RqosParams {
    #[serde(default = "two")]
    alpha: f64,
    #[serde(default = "one")]
    beta: f64,
}

fn two() -> f64 {
    2.0
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Exp3Params {
    gamma: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RcaParams {
    regenerative_states: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RankParams {
    #[serde(default = "ucb1_rule")]
    rule: IndexRule,
    pool: Option<usize>,
}

fn ucb1_rule() -> IndexRule {
    IndexRule::Ucb1
}

/// Parameters of the tabular learners.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularParams {
    #[serde(skip, default = "q_learning")]
    pub variant: Variant,
    /// Discount; the environment's own discount when absent.
    pub discount: Option<f64>,
    #[serde(default = "harmonic")]
    pub lr: LearningRateSchedule,
    #[serde(default)]
    pub rate_clock: RateClock,
    #[serde(default = "default_exploration")]
    pub exploration: ExplorationSchedule,
    #[serde(default)]
    pub initial_value: f64,
}

fn q_learning() -> Variant {
    Variant::QLearning
}

fn harmonic() -> LearningRateSchedule {
    LearningRateSchedule::Harmonic
}

fn default_exploration() -> ExplorationSchedule {
    ExplorationSchedule::ConstantEpsilon { eps0: 0.1 }
}

/// Parameters of the linear caching learner.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearCachingParams {
    #[serde(default = "power_rate")]
    pub lr: LearningRateSchedule,
    #[serde(default = "default_exploration")]
    pub exploration: ExplorationSchedule,
}

fn power_rate() -> LearningRateSchedule {
    LearningRateSchedule::Power { c0: 1.0, omega: 0.6 }
}

fn parse_params<T: DeserializeOwned>(params: &Value, errors: &mut Vec<String>) -> Option<T> {
    let value = if params.is_null() {
        Value::Object(Map::new())
    } else {
        params.clone()
    };
    at_path(&value, "agent.params", errors)
}

fn parse_agent(agent: &AgentConfig, errors: &mut Vec<String>) -> Option<AgentSpec> {
    let p = &agent.params;
    if !(p.is_null() || p.is_object()) {
        errors.push("agent.params: expected an object".into());
        return None;
    }
    let spec = match agent.id.as_str() {
        "ucb1" => parse_params::<NoParams>(p, errors).map(|_| AgentSpec::Index(IndexRule::Ucb1)),
        "klucb" => parse_params::<KlUcbParams>(p, errors)
            .map(|k| AgentSpec::Index(IndexRule::KlUcb { precision: k.precision })),
        "oksanen" => {
            parse_params::<OksanenParams>(p, errors).map(|o| AgentSpec::Index(IndexRule::Oksanen { g: o.g }))
        }
        "rqos_ucb" => parse_params::<RqosParams>(p, errors).map(|r| {
            AgentSpec::Index(IndexRule::RqosUcb {
                alpha: r.alpha,
                beta: r.beta,
            })
        }),
        "thompson" => parse_params::<NoParams>(p, errors).map(|_| AgentSpec::Thompson),
        "exp3" => parse_params::<Exp3Params>(p, errors).map(|e| AgentSpec::Exp3 { gamma: e.gamma }),
        "rca_ucb1" => parse_params::<RcaParams>(p, errors).map(|r| AgentSpec::Rca {
            rule: IndexRule::Ucb1,
            regenerative_states: r.regenerative_states,
        }),
        "random_rank" => parse_params::<RankParams>(p, errors).map(|r| AgentSpec::RandomRank {
            rule: r.rule,
            pool: r.pool,
        }),
        "uniform" => parse_params::<NoParams>(p, errors).map(|_| AgentSpec::Uniform),
        id @ ("q_learning" | "sarsa" | "double_q") => parse_params::<TabularParams>(p, errors).map(|mut t| {
            t.variant = match id {
                "q_learning" => Variant::QLearning,
                "sarsa" => Variant::Sarsa,
                _ => Variant::DoubleQ,
            };
            AgentSpec::Tabular(t)
        }),
        "linear_caching" => parse_params::<LinearCachingParams>(p, errors).map(AgentSpec::LinearCaching),
        other => {
            errors.push(format!(
                "agent.id: unknown agent `{other}`; registered agents: {}",
                algorithm_ids().join(", ")
            ));
            None
        }
    };
    if let Some(AgentSpec::Tabular(t)) = &spec {
        if let Err(e) = t.lr.validate().and_then(|_| t.exploration.validate()) {
            errors.push(format!("agent.params: {e}"));
        }
        if t.discount.is_some_and(|g| !(0.0..1.0).contains(&g)) {
            errors.push("agent.params.discount: must lie in [0,1)".into());
        }
    }
    if let Some(AgentSpec::Exp3 { gamma: Some(g) }) = &spec {
        if !(*g > 0.0 && *g <= 1.0) {
            errors.push("agent.params.gamma: must lie in (0,1]".into());
        }
    }
    spec
}

fn check_compatibility(env: &EnvConfig, spec: &AgentSpec, errors: &mut Vec<String>) {
    let id = env.id();
    let multi_user = matches!(env, EnvConfig::GilbertElliot(c) if c.n_users > 1);
    match spec {
        AgentSpec::RandomRank { pool, .. } => match env {
            EnvConfig::GilbertElliot(c) => {
                if pool.is_some_and(|p| p == 0 || p > c.n_channels()) {
                    errors.push(format!("agent.params.pool: must be in 1..={}", c.n_channels()));
                }
            }
            _ => errors.push(format!("agent `random_rank` needs a gilbert_elliot environment, got `{id}`")),
        },
        AgentSpec::Tabular(_) if env.is_bandit() => {
            errors.push(format!("tabular agents need a finite-state environment, got `{id}`"))
        }
        AgentSpec::LinearCaching(_) if !matches!(env, EnvConfig::Caching(_)) => {
            errors.push(format!("agent `linear_caching` needs a caching environment, got `{id}`"))
        }
        s if s.is_bandit() && !env.is_bandit() => {
            errors.push(format!("bandit agents need a bandit environment, got `{id}`"))
        }
        s if s.is_bandit() && multi_user => errors.push(
            "gilbert_elliot with several users needs the `random_rank` agent".into(),
        ),
        _ => {}
    }
    if let (AgentSpec::Exp3 { .. }, EnvConfig::GreenNet(_)) = (spec, env) {
        errors.push("exp3 needs rewards in [0,1]; green_net rewards are not normalized".into());
    }
    if let (AgentSpec::Rca { regenerative_states: Some(xi), .. }, EnvConfig::GilbertElliot(c)) = (spec, env) {
        if xi.len() != c.n_channels() || xi.iter().any(|&s| s > 2) {
            errors.push(format!(
                "agent.params.regenerative_states: need {} states in 0..=2",
                c.n_channels()
            ));
        }
    }
}

const TOP_LEVEL_KEYS: [&str; 8] = [
    "name",
    "env",
    "agent",
    "horizon",
    "replications",
    "master_seed",
    "output_dir",
    "outputs",
];

/// Deserialize `v`, reporting failures as `prefix.path: message`.
fn at_path<T: DeserializeOwned>(v: &Value, prefix: &str, errors: &mut Vec<String>) -> Option<T> {
    match serde_path_to_error::deserialize::<_, T>(v.clone()) {
        Ok(x) => Some(x),
        Err(e) => {
            let path = e.path().to_string();
            let at = if path == "." { String::new() } else { format!(".{path}") };
            errors.push(format!("{prefix}{at}: {}", e.inner()));
            None
        }
    }
}

fn field<T: DeserializeOwned>(obj: &Map<String, Value>, key: &str, errors: &mut Vec<String>) -> Option<T> {
    at_path(obj.get(key)?, key, errors)
}

/// Deserialize the variant body directly so that errors keep their key path.
fn parse_env(kind: &str, env: &Value, errors: &mut Vec<String>) -> Option<EnvConfig> {
    let mut body = env.clone();
    if let Some(o) = body.as_object_mut() {
        o.remove("type");
    }
    match kind {
        "bernoulli" => at_path(&body, "env", errors).map(EnvConfig::Bernoulli),
        "gilbert_elliot" => at_path(&body, "env", errors).map(EnvConfig::GilbertElliot),
        "link_buffer" => at_path(&body, "env", errors).map(EnvConfig::LinkBuffer),
        "caching" => at_path(&body, "env", errors).map(EnvConfig::Caching),
        "green_net" => at_path(&body, "env", errors).map(EnvConfig::GreenNet),
        "adversarial" => at_path(&body, "env", errors).map(EnvConfig::Adversarial),
        "mdp" => at_path(&body, "env", errors).map(EnvConfig::Mdp),
        _ => unreachable!("type checked against the registry"),
    }
}

/// Parse and validate a configuration document, reporting every violation.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let doc: Value = serde_json::from_str(text).map_err(|e| ConfigErrors {
        errors: vec![format!("malformed JSON: {e}")],
    })?;
    let obj = doc.as_object().ok_or_else(|| ConfigErrors {
        errors: vec!["configuration must be a JSON object".into()],
    })?;
    let mut errors = Vec::new();
    for key in ["name", "env", "agent", "horizon", "replications", "master_seed"] {
        if !obj.contains_key(key) {
            errors.push(format!("{key}: missing required key"));
        }
    }
    for key in obj.keys() {
        if !TOP_LEVEL_KEYS.contains(&key.as_str()) {
            errors.push(format!("{key}: unknown key"));
        }
    }
    let name: Option<String> = field(obj, "name", &mut errors);
    let horizon: Option<usize> = field(obj, "horizon", &mut errors);
    let replications: Option<usize> = field(obj, "replications", &mut errors);
    let master_seed: Option<u64> = field(obj, "master_seed", &mut errors);
    let output_dir: Option<PathBuf> = field(obj, "output_dir", &mut errors);
    let outputs: Option<OutputOptions> = field(obj, "outputs", &mut errors);
    if horizon == Some(0) {
        errors.push("horizon: must be at least 1".into());
    }
    if replications == Some(0) {
        errors.push("replications: must be at least 1".into());
    }

    let env = match obj.get("env").map(|e| e.get("type")) {
        Some(None) => {
            errors.push("env.type: missing required key".into());
            None
        }
        Some(Some(Value::String(t))) if !EnvConfig::IDS.contains(&t.as_str()) => {
            errors.push(format!(
                "env.type: unknown environment `{t}`; registered environments: {}",
                EnvConfig::IDS.join(", ")
            ));
            None
        }
        Some(Some(Value::String(t))) => parse_env(t, &obj["env"], &mut errors),
        Some(Some(_)) => {
            errors.push("env.type: expected a string".into());
            None
        }
        None => None,
    };
    if let Some(env) = &env {
        if let Err(e) = env.validate() {
            errors.push(format!("env: {e}"));
        }
    }
    let agent: Option<AgentConfig> = field(obj, "agent", &mut errors);
    let spec = agent.as_ref().and_then(|a| parse_agent(a, &mut errors));
    if let (Some(env), Some(spec)) = (&env, &spec) {
        check_compatibility(env, spec, &mut errors);
    }
    if let (Some(EnvConfig::Adversarial(a)), Some(h)) = (&env, horizon) {
        if h > a.horizon() {
            errors.push(format!("horizon: {h} exceeds the adversarial sequence length {}", a.horizon()));
        }
    }
    if !errors.is_empty() {
        return Err(ConfigErrors { errors });
    }
    Ok(ExperimentConfig {
        name: name.expect("checked"),
        env: env.expect("checked"),
        agent: agent.expect("checked"),
        horizon: horizon.expect("checked"),
        replications: replications.expect("checked"),
        master_seed: master_seed.expect("checked"),
        output_dir,
        outputs: outputs.unwrap_or_default(),
        spec: spec.expect("checked"),
    })
}
