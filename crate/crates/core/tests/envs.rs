mod common;

use common::stationary;
use phybandit::envs::{
    AdversarialEnv, AdversarialSeqConfig, BanditEnv, BaseStationSpec, BernoulliChannelsConfig, BernoulliChannelsEnv,
    CachingConfig, CachingEnv, DiscreteEnv, GilbertElliotEnv, GilbertElliotQualityConfig, GreenNetConfig,
    GreenNetEnv, LinkBufferConfig, LinkBufferEnv, Oracle, PopularityProfile,
};
use phybandit::mdp::{value_iteration, DEFAULT_MAX_ITER};
use phybandit::rng::stream;
use proptest::prelude::*;
use rand::Rng;

/// Measured reference success rates of the seven PoC channels.
const REFERENCE_SUCCESS: [f64; 7] = [0.21, 0.20, 0.24, 0.49, 0.62, 0.76, 0.96];
/// Jamming level of the seven PoC channels.
const JAMMING: [f64; 7] = [0.30, 0.25, 0.20, 0.15, 0.10, 0.05, 0.0];

#[test]
fn poc_channel_tables() {
    let mut env = BernoulliChannelsEnv::new(&BernoulliChannelsConfig {
        success_probs: REFERENCE_SUCCESS.to_vec(),
    })
    .unwrap();
    assert_eq!(env.oracle().best_arm(), 6);
    let uniform = REFERENCE_SUCCESS.iter().sum::<f64>() / 7.0;
    assert!((uniform - 0.497).abs() < 1e-3);
    env.reset(17);
    let n = 100_000;
    for (k, &p) in REFERENCE_SUCCESS.iter().enumerate() {
        let acks: f64 = (0..n).map(|_| env.pull(k).unwrap().reward).sum();
        assert!((acks / n as f64 - p).abs() < 0.01);
    }

    let availability: Vec<f64> = JAMMING.iter().map(|j| 1.0 - j).collect();
    for (a, want) in availability.iter().zip([0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 1.00]) {
        assert!((a - want).abs() < 1e-12);
    }
    let env = BernoulliChannelsEnv::new(&BernoulliChannelsConfig {
        success_probs: availability,
    })
    .unwrap();
    assert_eq!(env.oracle().best_arm(), 6);
}

fn three_state_channels() -> GilbertElliotQualityConfig {
    GilbertElliotQualityConfig {
        transitions: vec![
            vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.5, 0.3], vec![0.1, 0.2, 0.7]],
            vec![vec![0.9, 0.05, 0.05], vec![0.4, 0.4, 0.2], vec![0.3, 0.1, 0.6]],
        ],
        rates: vec![[0.3, 0.9], [0.5, 1.0]],
        n_users: 1,
        collision_rule: Default::default(),
        initial_states: None,
    }
}

#[test]
fn channel_state_frequencies_match_stationary_law() {
    let cfg = three_state_channels();
    let mut env = GilbertElliotEnv::new(&cfg).unwrap();
    env.reset(5);
    let steps = 1_000_000;
    let mut counts = vec![[0usize; 3]; 2];
    for _ in 0..steps {
        env.advance();
        for (j, s) in env.channel_states().iter().enumerate() {
            counts[j][s.index()] += 1;
        }
    }
    for j in 0..2 {
        let pi = stationary(&cfg.transitions[j]);
        for s in 0..3 {
            let freq = counts[j][s] as f64 / steps as f64;
            assert!((freq - pi[s]).abs() < 0.01, "channel {j} state {s}: {freq} vs {}", pi[s]);
        }
    }
}

#[test]
fn collisions_pay_nothing() {
    let mut cfg = GilbertElliotQualityConfig::two_state(&[(1.0, 0.0), (1.0, 0.0)], 2);
    cfg.transitions[0] = vec![vec![0.0, 0.0, 1.0]; 3];
    let mut env = GilbertElliotEnv::new(&cfg).unwrap();
    env.reset(0);
    let out = env.step_users(&[0, 0]).unwrap();
    assert!(out.iter().all(|u| u.collided && u.reward == 0.0));
    let out = env.step_users(&[0, 1]).unwrap();
    assert!(out.iter().all(|u| !u.collided && u.reward == 1.0));
}

fn small_link() -> LinkBufferConfig {
    let b_max = 4;
    let powers = vec![0.0, 1.0, 2.0];
    LinkBufferConfig {
        channel_transition: vec![vec![0.8, 0.2], vec![0.3, 0.7]],
        arrival_probs: vec![0.5, 0.3, 0.2],
        buffer_capacity: b_max,
        codeword_length: 4,
        error_prob: LinkBufferConfig::outage_error_table(&[0.5, 2.0], &powers, b_max, 4),
        power_levels: powers,
        static_power: 0.2,
        amplifier_efficiency: 0.5,
        overflow_cost: 5.0,
        lagrange_multiplier: 0.5,
        discount: 0.9,
    }
}

#[test]
fn compiled_link_stationary_law_matches_simulation() {
    let cfg = small_link();
    let mdp = cfg.compile_to_mdp().unwrap();
    let n = mdp.n_states();
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            assert!((mdp.transition_row(s, a).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
    // Fixed policy: empty the whole buffer at top power.
    let policy: Vec<usize> = (0..n).map(|s| cfg.encode_action(2, cfg.decode_state(s).1)).collect();
    let chain: Vec<Vec<f64>> = (0..n).map(|s| mdp.transition_row(s, policy[s]).to_vec()).collect();
    let pi = stationary(&chain);

    let mut env = LinkBufferEnv::new(&cfg).unwrap();
    let mut s = env.reset(7);
    let steps = 1_000_000;
    let mut counts = vec![0usize; n];
    for _ in 0..steps {
        s = env.step(policy[s]).unwrap().next_state;
        counts[s] += 1;
    }
    for i in 0..n {
        assert!((counts[i] as f64 / steps as f64 - pi[i]).abs() < 1e-2);
    }
}

#[test]
fn optimal_link_value_matches_monte_carlo_cost() {
    let cfg = small_link();
    let mdp = cfg.compile_to_mdp().unwrap();
    let (v, policy) = value_iteration(&mdp, 1e-10, DEFAULT_MAX_ITER).unwrap();
    let mut env = LinkBufferEnv::new(&cfg).unwrap();
    let episode = 150;
    let episodes = 1_000_000 / episode;
    let mut total = 0.0;
    for e in 0..episodes {
        let mut s = env.reset(e as u64);
        let mut discount = 1.0;
        for _ in 0..episode {
            let out = env.step(policy.action(s)).unwrap();
            total += discount * -out.reward;
            discount *= cfg.discount;
            s = out.next_state;
        }
    }
    let simulated = total / episodes as f64;
    let exact = -v.v[0];
    assert!((simulated - exact).abs() <= 0.02 * exact, "{simulated} vs {exact}");
}

#[test]
fn single_slot_cache_prefers_most_popular_file() {
    let cfg = CachingConfig {
        n_files: 3,
        cache_size: 1,
        popularity: vec![PopularityProfile::Explicit(vec![0.6, 0.3, 0.1])],
        popularity_transition: vec![vec![1.0]],
        refresh_weight: 0.0,
        miss_weight: 1.0,
        discount: 0.9,
    };
    let env = CachingEnv::new(&cfg).unwrap();
    let p = env.popularity(0).to_vec();
    let prev = env.cache_vectors()[0].clone();
    let costs: Vec<f64> = env.cache_vectors().iter().map(|a| cfg.cost(&p, &prev, a)).collect();
    // Miss cost of caching only file f is 1 − p_f.
    let (best, cost) = costs
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &c)| if c < acc.1 { (i, c) } else { acc });
    assert_eq!(env.cache_vectors()[best], vec![true, false, false]);
    assert!((cost - 0.4).abs() < 1e-12);
}

#[test]
fn green_net_action_space_and_oracle() {
    let two = GreenNetConfig::from_cells(
        &[
            BaseStationSpec { capacity: 10.0, static_power: 5.0, load_power: 2.0 },
            BaseStationSpec { capacity: 8.0, static_power: 4.0, load_power: 1.0 },
        ],
        6.0,
        0.9,
        5.0,
    )
    .unwrap();
    assert_eq!(two.n_actions(), 3);

    let cells = [
        BaseStationSpec { capacity: 10.0, static_power: 6.0, load_power: 3.0 },
        BaseStationSpec { capacity: 6.0, static_power: 2.0, load_power: 1.0 },
        BaseStationSpec { capacity: 4.0, static_power: 3.0, load_power: 4.0 },
    ];
    let cfg = GreenNetConfig::from_cells(&cells, 7.0, 0.9, 6.0).unwrap();
    assert_eq!(cfg.n_actions(), 7);
    // Independent enumeration over on/off masks 1..=7.
    let mut best: Option<(usize, f64)> = None;
    for mask in 1..8usize {
        let on: Vec<&BaseStationSpec> = (0..3).filter(|k| mask >> k & 1 == 1).map(|k| &cells[k]).collect();
        let capacity: f64 = on.iter().map(|c| c.capacity).sum();
        let load = 7.0 / capacity;
        let served: f64 = on.iter().map(|c| c.capacity * load.min(1.0)).sum();
        if load > 0.9 || served < 6.0 {
            continue;
        }
        let ee: f64 = on
            .iter()
            .map(|c| c.capacity * load.min(1.0) / (c.static_power + c.load_power * load))
            .sum();
        if best.is_none_or(|(_, b)| ee > b + 1e-12) {
            best = Some((mask - 1, ee));
        }
    }
    let (oracle, ee) = best.unwrap();
    assert_eq!(cfg.best_feasible(), Some(oracle));
    let env = GreenNetEnv::new(&cfg).unwrap();
    match env.oracle() {
        Oracle::Means(m) => {
            assert_eq!(env.oracle().best_arm(), oracle);
            assert!((m[oracle] - ee).abs() < 1e-12);
        }
        Oracle::Sequence(_) => panic!("green net oracle is stationary"),
    }
}

#[test]
fn adversarial_sequences() {
    let h = 100;
    let alt = AdversarialSeqConfig::alternating_with_drift(h, 0.0).unwrap();
    let mut env = AdversarialEnv::new(&alt).unwrap();
    assert_eq!(env.best_arm_total(), h as f64 / 2.0);

    let constant = AdversarialSeqConfig { rewards: vec![vec![0.4; 5]; 3] };
    let mut flat = AdversarialEnv::new(&constant).unwrap();
    let got: f64 = (0..5).map(|t| flat.pull(t % 3).unwrap().reward).sum();
    assert!((got - flat.best_arm_total()).abs() < 1e-12);
    assert!(flat.pull(0).is_err());

    env.reset(0);
    for t in 0..h {
        env.pull(t % 2).unwrap();
    }
    assert!(env.pull(0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn channels_are_restless(seed in any::<u64>(), a in prop::collection::vec(0usize..2, 200), b in prop::collection::vec(0usize..2, 200)) {
        let cfg = three_state_channels();
        let mut x = GilbertElliotEnv::new(&cfg).unwrap();
        let mut y = GilbertElliotEnv::new(&cfg).unwrap();
        x.reset(seed);
        y.reset(seed);
        prop_assert_eq!(x.channel_states(), y.channel_states());
        for (&ca, &cb) in a.iter().zip(&b) {
            x.pull(ca).unwrap();
            y.pull(cb).unwrap();
            prop_assert_eq!(x.channel_states(), y.channel_states());
        }
    }

    #[test]
    fn link_buffer_stays_in_bounds_with_nonnegative_cost(seed in any::<u64>(), actions in prop::collection::vec(0usize..15, 1..300)) {
        let cfg = small_link();
        let mut env = LinkBufferEnv::new(&cfg).unwrap();
        env.reset(seed);
        for a in actions {
            let out = env.step(a).unwrap();
            prop_assert!(-out.reward >= 0.0);
            let (_, b) = env.channel_and_buffer();
            prop_assert!(b <= cfg.buffer_capacity);
        }
    }

    #[test]
    fn caching_cost_is_nonnegative(seed in any::<u64>(), actions in prop::collection::vec(0usize..6, 1..200), refresh in 0.0f64..2.0) {
        let mut cfg = CachingConfig {
            n_files: 4,
            cache_size: 2,
            popularity: vec![
                PopularityProfile::Zipf { zipf_exponent: 0.8, ranking: None },
                PopularityProfile::Explicit(vec![0.1, 0.2, 0.3, 0.4]),
            ],
            popularity_transition: vec![vec![0.7, 0.3], vec![0.5, 0.5]],
            refresh_weight: 0.0,
            miss_weight: 1.0,
            discount: 0.9,
        };
        cfg.refresh_weight = refresh;
        let mut env = CachingEnv::new(&cfg).unwrap();
        env.reset(seed);
        for a in actions {
            prop_assert!(env.cache(a).unwrap().cost >= 0.0);
        }
    }

    #[test]
    fn green_reward_vanishes_exactly_when_infeasible(
        caps in prop::collection::vec(1.0f64..10.0, 3),
        statics in prop::collection::vec(0.5f64..5.0, 3),
        demand in 1.0f64..20.0,
        threshold in 0.3f64..1.2,
        min_tp in 0.0f64..15.0,
    ) {
        let cells: Vec<BaseStationSpec> = (0..3)
            .map(|k| BaseStationSpec { capacity: caps[k], static_power: statics[k], load_power: 1.0 })
            .collect();
        let cfg = GreenNetConfig::from_cells(&cells, demand, threshold, min_tp).unwrap();
        let mut env = GreenNetEnv::new(&cfg).unwrap();
        for a in 0..cfg.n_actions() {
            let fb = env.pull(a).unwrap();
            prop_assert_eq!(fb.reward == 0.0, !cfg.feasible(a));
            prop_assert_eq!(fb.available, cfg.feasible(a));
        }
    }
}

#[test]
fn poc_rng_streams_are_reproducible() {
    let cfg = BernoulliChannelsConfig { success_probs: REFERENCE_SUCCESS.to_vec() };
    let mut a = BernoulliChannelsEnv::new(&cfg).unwrap();
    let mut b = BernoulliChannelsEnv::new(&cfg).unwrap();
    a.reset(99);
    b.reset(99);
    let mut pick = stream(1);
    for _ in 0..1000 {
        let k = pick.random_range(0..7);
        assert_eq!(a.pull(k).unwrap(), b.pull(k).unwrap());
    }
}
