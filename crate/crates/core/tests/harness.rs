use std::path::Path;

use phybandit::bandits::lower_bound_curve;
use phybandit::harness::{emit_bound_curve, parse_config, run_experiment, Prepared};
use proptest::prelude::*;
use serde_json::Value;

const POC: [f64; 7] = [0.21, 0.20, 0.24, 0.49, 0.62, 0.76, 0.96];

fn bernoulli_config(agent: &str, horizon: usize, replications: usize, seed: u64) -> String {
    format!(
        r#"{{"name":"h","env":{{"type":"bernoulli","success_probs":[0.2,0.5,0.8]}},
            "agent":{{"id":"{agent}"}},"horizon":{horizon},"replications":{replications},"master_seed":{seed}}}"#
    )
}

/// Reference SplitMix64: advance the state `index + 1` times, mix once.
fn splitmix_reference(seed: u64, index: u64) -> u64 {
    let mut state = seed;
    let mut out = 0;
    for _ in 0..=index {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        out = z ^ (z >> 31);
    }
    out
}

fn read_rounds(dir: &Path) -> Vec<(usize, usize, usize, f64, f64)> {
    let mut r = csv::Reader::from_path(dir.join("rounds.csv")).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["replication", "t", "actor", "action", "reward", "cumulative_regret"]
    );
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (
                rec[0].parse().unwrap(),
                rec[1].parse().unwrap(),
                rec[3].parse().unwrap(),
                rec[4].parse().unwrap(),
                rec[5].parse().unwrap(),
            )
        })
        .collect()
}

#[test]
fn configs_round_trip() {
    let docs = [
        bernoulli_config("klucb", 10, 2, 3),
        r#"{"name":"ge","env":{"type":"gilbert_elliot","transitions":[[[0.5,0.25,0.25],[0.3,0.3,0.4],[0.2,0.2,0.6]],[[0.8,0.1,0.1],[0.5,0.25,0.25],[0.5,0.25,0.25]]],"rates":[[0.4,1.0],[0.5,0.9]],"n_users":1},
            "agent":{"id":"rca_ucb1"},"horizon":20,"replications":1,"master_seed":1}"#
            .to_string(),
        r#"{"name":"adv","env":{"type":"adversarial","rewards":[[1,0,1,0],[0,1,0,1]]},
            "agent":{"id":"exp3","params":{"gamma":0.2}},"horizon":4,"replications":1,"master_seed":2}"#
            .to_string(),
    ];
    for doc in docs {
        let cfg = parse_config(&doc).unwrap();
        let again = parse_config(&cfg.to_json()).unwrap();
        let a: Value = serde_json::from_str(&cfg.to_json()).unwrap();
        let b: Value = serde_json::from_str(&again.to_json()).unwrap();
        assert_eq!(a, b);
        assert_eq!(again.env, cfg.env);
        assert_eq!(again.agent, cfg.agent);
    }
}

#[test]
fn config_errors_are_collected() {
    let err = parse_config(r#"{"name":"x","env":{"type":"bernoulli","success_probs":[0.5]},"agent":{"id":"ucb99"},"replications":0,"master_seed":1}"#)
        .unwrap_err();
    let text = err.to_string();
    assert!(text.contains("horizon"));
    assert!(text.contains("ucb99") && text.contains("ucb1") && text.contains("thompson"));
    assert!(err.errors.len() >= 3, "{:?}", err.errors);
}

#[test]
fn regret_column_matches_recomputation() {
    let means = [0.2, 0.5, 0.8];
    for agent in ["ucb1", "thompson", "exp3", "uniform"] {
        let cfg = parse_config(&bernoulli_config(agent, 300, 3, 21)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        run_experiment(&cfg, dir.path()).unwrap();
        let rows = read_rounds(dir.path());
        assert_eq!(rows.len(), 900);
        let mut regret = [0.0f64; 3];
        for (rep, _, action, _, cumulative) in rows {
            regret[rep] += 0.8 - means[action];
            assert!((regret[rep] - cumulative).abs() < 1e-9, "{agent}");
        }
    }
}

#[test]
fn replication_seeds_follow_splitmix() {
    let cfg = parse_config(&bernoulli_config("ucb1", 5, 4, 0xDEAD_BEEF)).unwrap();
    let p = Prepared::new(&cfg).unwrap();
    for i in 0..4 {
        assert_eq!(p.replication_seed(i), splitmix_reference(0xDEAD_BEEF, i as u64));
    }
}

#[test]
fn output_is_byte_identical_and_replications_independent() {
    let cfg = parse_config(&bernoulli_config("thompson", 200, 3, 5)).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&cfg, a.path()).unwrap();
    run_experiment(&cfg, b.path()).unwrap();
    for f in ["rounds.csv", "summary.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }

    let more = parse_config(&bernoulli_config("thompson", 200, 6, 5)).unwrap();
    let c = tempfile::tempdir().unwrap();
    run_experiment(&more, c.path()).unwrap();
    let few = read_rounds(a.path());
    let many: Vec<_> = read_rounds(c.path()).into_iter().filter(|r| r.0 < 3).collect();
    assert_eq!(few, many);
}

#[test]
fn summary_file_has_aggregate_row() {
    let cfg = parse_config(&bernoulli_config("ucb1", 50, 4, 8)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = run_experiment(&cfg, dir.path()).unwrap();
    let mut r = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    let records: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 5);
    assert_eq!(&records[4][0], "aggregate");
    for rec in &records[..4] {
        let counts: u64 = rec[7].split(';').map(|c| c.parse::<u64>().unwrap()).sum();
        assert_eq!(counts, 50);
    }
    assert!(summary.aggregate.final_regret_ci95 >= 0.0);
    assert_eq!(summary.aggregate.n, 4);
}

#[test]
fn bound_curve_values() {
    let exact = 0.1 / (0.8 * (0.8f64 / 0.9).ln() + 0.2 * 2f64.ln());
    let at_e = lower_bound_curve(&[0.9, 0.8], std::f64::consts::E).unwrap();
    assert!((at_e - exact).abs() < 1e-9);
    assert!((at_e - 2.252).abs() < 0.01);

    let cfg = parse_config(
        r#"{"name":"b","env":{"type":"bernoulli","success_probs":[0.9,0.8]},"agent":{"id":"ucb1"},
            "horizon":50,"replications":1,"master_seed":1}"#,
    )
    .unwrap();
    let mut out = Vec::new();
    emit_bound_curve(&cfg, &mut out).unwrap();
    let mut r = csv::Reader::from_reader(out.as_slice());
    let values: Vec<f64> = r.records().map(|rec| rec.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(values.len(), 50);
    assert_eq!(values[0], 0.0);
    assert!(values.windows(2).all(|w| w[1] > w[0]));
    assert!((values[9] - 10f64.ln() * exact).abs() < 1e-9);
}

#[test]
fn poc_experiment_summary() {
    let probs = POC.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    let cfg = parse_config(&format!(
        r#"{{"name":"poc","env":{{"type":"bernoulli","success_probs":[{probs}]}},"agent":{{"id":"ucb1"}},
            "horizon":528,"replications":100,"master_seed":2024}}"#
    ))
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = run_experiment(&cfg, dir.path()).unwrap();
    let agg = &summary.aggregate;
    assert_eq!(agg.n, 100);
    assert!(agg.mean_pull_counts[6] >= 240.0, "{:?}", agg.mean_pull_counts);
    assert!(agg.reward_sum_mean / 528.0 >= 0.72, "{}", agg.reward_sum_mean);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn counts_sum_to_horizon(
        agent in prop::sample::select(vec!["ucb1", "klucb", "oksanen", "rqos_ucb", "thompson", "exp3", "rca_ucb1", "uniform"]),
        horizon in 1usize..200,
        seed in any::<u64>(),
    ) {
        let cfg = parse_config(&bernoulli_config(agent, horizon, 2, seed)).unwrap();
        let p = Prepared::new(&cfg).unwrap();
        for i in 0..2 {
            let o = p.run_replication(i);
            prop_assert!(o.summary.error.is_none());
            prop_assert_eq!(o.summary.pull_counts.iter().sum::<u64>(), horizon as u64);
            prop_assert_eq!(o.rounds.len(), horizon);
        }
    }
}
