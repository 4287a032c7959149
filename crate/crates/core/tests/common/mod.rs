//! Independent oracles shared by the integration tests. Nothing here calls
//! the solvers under test.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, ToPrimitive, Zero};
use phybandit::mdp::FiniteMdp;
use rand::Rng;

/// Random MDP with rows normalized from uniform draws and rewards in `[0,1)`.
pub fn random_mdp<R: Rng>(rng: &mut R, ns: usize, na: usize, discount: f64) -> FiniteMdp {
    let transition = (0..ns)
        .map(|_| {
            (0..na)
                .map(|_| {
                    let raw: Vec<f64> = (0..ns).map(|_| rng.random::<f64>() + 1e-3).collect();
                    let total: f64 = raw.iter().sum();
                    raw.iter().map(|x| x / total).collect()
                })
                .collect()
        })
        .collect();
    let reward = (0..ns).map(|_| (0..na).map(|_| rng.random::<f64>()).collect()).collect();
    FiniteMdp::new(transition, reward, discount).unwrap()
}

/// `(I − γ P_π)⁻¹ r_π` by a dense LU solve, for a stochastic policy `pi[s][a]`.
pub fn exact_value(mdp: &FiniteMdp, pi: &[Vec<f64>]) -> Vec<f64> {
    let n = mdp.n_states();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut r = DVector::<f64>::zeros(n);
    for s in 0..n {
        for (a, &w) in pi[s].iter().enumerate() {
            r[s] += w * mdp.reward(s, a);
            for (s2, &p) in mdp.transition_row(s, a).iter().enumerate() {
                m[(s, s2)] -= mdp.discount() * w * p;
            }
        }
    }
    m.lu().solve(&r).expect("I − γP is invertible").iter().copied().collect()
}

pub fn deterministic(policy: &[usize], na: usize) -> Vec<Vec<f64>> {
    policy
        .iter()
        .map(|&a| (0..na).map(|b| if a == b { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Every deterministic policy, with its exact value.
pub fn all_policies(mdp: &FiniteMdp) -> Vec<(Vec<usize>, Vec<f64>)> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let total = na.pow(ns as u32);
    (0..total)
        .map(|mut code| {
            let policy: Vec<usize> = (0..ns)
                .map(|_| {
                    let a = code % na;
                    code /= na;
                    a
                })
                .collect();
            let v = exact_value(mdp, &deterministic(&policy, na));
            (policy, v)
        })
        .collect()
}

/// Optimal values by enumeration, and the set of optimal actions per state
/// (actions used by some policy that is optimal everywhere within `eps`).
pub fn brute_force_optimum(mdp: &FiniteMdp, eps: f64) -> (Vec<f64>, Vec<Vec<usize>>) {
    let all = all_policies(mdp);
    let ns = mdp.n_states();
    let best: Vec<f64> = (0..ns)
        .map(|s| all.iter().map(|(_, v)| v[s]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let mut sets = vec![Vec::new(); ns];
    for (policy, v) in &all {
        if v.iter().zip(&best).all(|(x, b)| (x - b).abs() <= eps) {
            for s in 0..ns {
                if !sets[s].contains(&policy[s]) {
                    sets[s].push(policy[s]);
                }
            }
        }
    }
    (best, sets)
}

/// Stationary law of a row-stochastic matrix from `πᵀ(P − I) = 0`,
/// `Σπ = 1`, with the last balance equation replaced by normalization.
pub fn stationary(p: &[Vec<f64>]) -> Vec<f64> {
    let n = p.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(j, i)] = p[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for i in 0..n {
        m[(n - 1, i)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[n - 1] = 1.0;
    m.lu().solve(&rhs).unwrap().iter().copied().collect()
}

pub fn rational(x: f64) -> BigRational {
    BigRational::from_f64(x).expect("finite")
}

/// Dot product evaluated exactly in rationals, then rounded once.
pub fn exact_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = BigRational::zero();
    for (x, y) in a.iter().zip(b) {
        acc += rational(*x) * rational(*y);
    }
    acc.to_f64().unwrap()
}

pub fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Bernoulli relative entropy written out independently.
pub fn kl(p: f64, q: f64) -> f64 {
    let term = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x * (x / y).ln() };
    term(p, q) + term(1.0 - p, 1.0 - q)
}

/// Largest `q ∈ [mean, 1]` with `n·kl(mean, q) ≤ ln t`, by 200 halvings.
pub fn klucb_bisection(mean: f64, n: f64, t: f64) -> f64 {
    let target = t.ln() / n;
    let (mut lo, mut hi) = (mean, 1.0 - 1e-15);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kl(mean, mid) > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Sign-test p-value: probability of at least `k` successes in `n` fair
/// coin flips.
pub fn sign_test_p(k: usize, n: usize) -> f64 {
    let mut total = 0.0;
    for i in k..=n {
        let mut c = 1.0f64;
        for j in 0..i {
            c *= (n - j) as f64 / (j + 1) as f64;
        }
        total += c;
    }
    total / 2f64.powi(n as i32)
}
