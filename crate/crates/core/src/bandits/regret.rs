use crate::error::{Error, Result};

/// Bernoulli Kullback-Leibler divergence `kl(p, q)` with `0 ln 0 = 0`.
pub fn kl_bernoulli(p: f64, q: f64) -> f64 {
    fn term(x: f64, y: f64) -> f64 {
        if x == 0.0 {
            0.0
        } else if y == 0.0 {
            f64::INFINITY
        } else {
            x * (x / y).ln()
        }
    }
    term(p, q) + term(1.0 - p, 1.0 - q)
}

/// `Σ_i (μ* − μ_i) N_i`.
pub fn regret_from_counts(counts: &[u64], means: &[f64]) -> f64 {
    let best = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    counts.iter().zip(means).map(|(&n, &m)| (best - m) * n as f64).sum()
}

/// Cumulative regret after every round of an arm sequence.
pub fn empirical_regret(arms: &[usize], means: &[f64]) -> Result<Vec<f64>> {
    let mut trace = RegretTrace::new(means.to_vec())?;
    for &a in arms {
        trace.push(a)?;
    }
    Ok(trace.cumulative)
}

/// Running pull counts and cumulative regret.
///
/// Each entry is recomputed from the pull counts, so the last entry equals
/// [`regret_from_counts`] on the final counts exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub means: Vec<f64>,
    pub counts: Vec<u64>,
    pub arms: Vec<usize>,
    pub cumulative: Vec<f64>,
}

impl RegretTrace {
    pub fn new(means: Vec<f64>) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::Contract("regret needs at least one arm".into()));
        }
        Ok(Self {
            counts: vec![0; means.len()],
            means,
            arms: Vec::new(),
            cumulative: Vec::new(),
        })
    }

    pub fn push(&mut self, arm: usize) -> Result<f64> {
        let c = self
            .counts
            .get_mut(arm)
            .ok_or_else(|| Error::Contract(format!("arm {arm} out of range")))?;
        *c += 1;
        let r = regret_from_counts(&self.counts, &self.means);
        self.arms.push(arm);
        self.cumulative.push(r);
        Ok(r)
    }

    pub fn last(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

/// `1/kl(μ_i, μ*)` for every arm other than the first best one, as
/// `(arm, coefficient)`; arms tied with the best get `+∞`.
pub fn lai_robbins_coefficients(means: &[f64]) -> Result<Vec<(usize, f64)>> {
    if means.is_empty() || means.iter().any(|m| !(0.0..=1.0).contains(m)) {
        return Err(Error::Contract("Bernoulli means must lie in [0,1]".into()));
    }
    let best = crate::mdp::argmax(means);
    Ok(means
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(i, &m)| {
            let d = kl_bernoulli(m, means[best]);
            (i, if d > 0.0 { 1.0 / d } else { f64::INFINITY })
        })
        .collect())
}

/// Lai-Robbins regret lower bound `ln t · Σ_i (μ* − μ_i)/kl(μ_i, μ*)`,
/// skipping arms with infinite coefficients.
pub fn lower_bound_curve(means: &[f64], t: f64) -> Result<f64> {
    let best = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let slope: f64 = lai_robbins_coefficients(means)?
        .into_iter()
        .filter(|(_, c)| c.is_finite())
        .map(|(i, c)| (best - means[i]) * c)
        .sum();
    Ok(t.ln() * slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regret_from_textbook_counts() {
        let r = regret_from_counts(&[4, 3, 2], &[0.9, 0.5, 0.1]);
        assert!((r - 2.8).abs() < 1e-12);
    }

    #[test]
    fn equal_means_give_zero_regret() {
        let r = empirical_regret(&[0, 1, 1, 0, 2], &[0.4; 3]).unwrap();
        assert!(r.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn coefficient_examples() {
        let c = lai_robbins_coefficients(&[0.9, 0.8]).unwrap();
        assert_eq!(c[0].0, 1);
        assert!((c[0].1 - 22.521).abs() < 0.01);
        assert!(lai_robbins_coefficients(&[0.9, 0.9]).unwrap()[0].1.is_infinite());
        let bound = lower_bound_curve(&[0.9, 0.8], std::f64::consts::E).unwrap();
        assert!((bound - 2.252).abs() < 0.01);
        assert_eq!(lower_bound_curve(&[0.9, 0.9], 100.0).unwrap(), 0.0);
    }
}
