mod common;

use common::{brute_force_optimum, deterministic, exact_value, random_mdp};
use phybandit::mdp::{
    bellman_optimality_backup, optimal_q, policy_evaluation, policy_iteration, q_policy_evaluation, value_iteration,
    DeterministicPolicy, FiniteMdp, StochasticPolicy, ValueTable, DEFAULT_MAX_ITER,
};
use phybandit::rng::stream;
use proptest::prelude::*;
use rand::Rng;

const TOL: f64 = 1e-10;
const ITER: usize = DEFAULT_MAX_ITER;

#[test]
fn policy_evaluation_matches_linear_solve() {
    let mut rng = stream(1);
    for _ in 0..20 {
        let mdp = random_mdp(&mut rng, 4, 2, 0.9);
        let policy: Vec<usize> = (0..4).map(|_| rng.random_range(0..2)).collect();
        let v = policy_evaluation(&mdp, &DeterministicPolicy::new(policy.clone()), TOL, ITER).unwrap();
        let exact = exact_value(&mdp, &deterministic(&policy, 2));
        for (a, b) in v.v.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn q_evaluation_consistent_with_v() {
    let mut rng = stream(2);
    for _ in 0..20 {
        let mdp = random_mdp(&mut rng, 3, 3, 0.8);
        let pi: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                let w: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
                let t: f64 = w.iter().sum();
                w.iter().map(|x| x / t).collect()
            })
            .collect();
        let policy = StochasticPolicy::new(pi.clone()).unwrap();
        let q = q_policy_evaluation(&mdp, &policy, TOL, ITER).unwrap();
        let v = policy_evaluation(&mdp, &policy, TOL, ITER).unwrap();
        for s in 0..3 {
            let from_q: f64 = (0..3).map(|a| pi[s][a] * q.get(s, a)).sum();
            assert!((from_q - v.v[s]).abs() < 1e-6);
        }
    }
}

#[test]
fn greedy_from_optimal_q_is_brute_force_optimal() {
    let mut rng = stream(3);
    for _ in 0..30 {
        let mdp = random_mdp(&mut rng, 3, 2, 0.9);
        let q = optimal_q(&mdp, TOL, ITER).unwrap();
        let (_, sets) = brute_force_optimum(&mdp, 1e-7);
        for s in 0..3 {
            assert!(sets[s].contains(&q.argmax(s)));
        }
    }
}

#[test]
fn policy_iteration_matches_enumeration() {
    let mut rng = stream(4);
    for _ in 0..20 {
        let mdp = random_mdp(&mut rng, 4, 3, 0.9);
        let out = policy_iteration(&mdp, TOL, ITER).unwrap();
        let (best, _) = brute_force_optimum(&mdp, 1e-7);
        for (a, b) in out.value.v.iter().zip(&best) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}

#[test]
fn optimal_v_is_max_of_optimal_q() {
    let mut rng = stream(5);
    for _ in 0..20 {
        let mdp = random_mdp(&mut rng, 5, 3, 0.95);
        let q = optimal_q(&mdp, 1e-9, ITER).unwrap();
        let (v, _) = value_iteration(&mdp, 1e-9, ITER).unwrap();
        for s in 0..5 {
            assert!((q.max(s) - v.v[s]).abs() < 1e-7);
        }
    }
}

#[test]
fn deterministic_chain_backward_induction() {
    // 0 -> 1 -> 2 (absorbing). Action 0 advances, action 1 stays.
    // Entering 2 from 1 pays 1; nothing else pays.
    let t = vec![
        vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]],
        vec![vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]],
        vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]],
    ];
    let r = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0]];
    let g = 0.5;
    let mdp = FiniteMdp::new(t, r, g).unwrap();
    let q = optimal_q(&mdp, 1e-12, ITER).unwrap();
    // v(2)=0; q(1,0)=1, q(1,1)=γ·v(1)=0.5; q(0,0)=γ·1=0.5, q(0,1)=γ·v(0)=0.25.
    let hand = [[0.5, 0.25], [1.0, 0.5], [0.0, 0.0]];
    for s in 0..3 {
        for a in 0..2 {
            assert!((q.get(s, a) - hand[s][a]).abs() < 1e-10);
        }
    }
}

fn mdp_strategy(max_s: usize, max_a: usize) -> impl Strategy<Value = FiniteMdp> {
    (1..=max_s, 1..=max_a, 0.1f64..0.95, any::<u64>())
        .prop_map(|(ns, na, g, seed)| random_mdp(&mut stream(seed), ns, na, g))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn value_iteration_contracts(mdp in mdp_strategy(5, 3)) {
        let (v_star, _) = value_iteration(&mdp, 1e-12, ITER).unwrap();
        let mut v = ValueTable::zeros(mdp.n_states());
        for _ in 0..30 {
            let next = bellman_optimality_backup(&mdp, &v);
            let before = v.sup_distance(&v_star);
            let after = next.sup_distance(&v_star);
            prop_assert!(after <= mdp.discount() * before + 1e-9);
            v = next;
        }
    }

    #[test]
    fn policy_iteration_improves_monotonically(mdp in mdp_strategy(4, 4)) {
        let out = policy_iteration(&mdp, 1e-11, ITER).unwrap();
        for w in out.history.windows(2) {
            for s in 0..mdp.n_states() {
                prop_assert!(w[1].v[s] >= w[0].v[s] - 1e-8);
            }
        }
        prop_assert!(out.improvement_steps <= mdp.n_actions().pow(mdp.n_states() as u32));
    }

    #[test]
    fn optimal_q_agrees_with_enumeration(mdp in mdp_strategy(4, 3)) {
        let q = optimal_q(&mdp, 1e-11, ITER).unwrap();
        let (_, sets) = brute_force_optimum(&mdp, 1e-7);
        for s in 0..mdp.n_states() {
            prop_assert!(sets[s].contains(&q.argmax(s)));
        }
    }

    #[test]
    fn reward_shift_is_covariant(mdp in mdp_strategy(4, 3), c in -3.0f64..3.0) {
        let (v, _) = value_iteration(&mdp, 1e-11, ITER).unwrap();
        let shifted = mdp.shift_rewards(c);
        let (w, _) = value_iteration(&shifted, 1e-11, ITER).unwrap();
        let q = optimal_q(&mdp, 1e-11, ITER).unwrap();
        let qs = optimal_q(&shifted, 1e-11, ITER).unwrap();
        for s in 0..mdp.n_states() {
            prop_assert!((w.v[s] - v.v[s] - c / (1.0 - mdp.discount())).abs() < 1e-6);
            let best = q.max(s);
            let best_s = qs.max(s);
            for a in 0..mdp.n_actions() {
                let in_set = best - q.get(s, a) < 1e-7;
                let in_set_s = best_s - qs.get(s, a) < 1e-7;
                prop_assert_eq!(in_set, in_set_s);
            }
        }
    }
}
