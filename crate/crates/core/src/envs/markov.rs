//! Small finite Markov-chain helpers shared by the environments.

use crate::error::{Error, Result};

const ROW_EPS: f64 = 1e-9;

/// Check that `m` is a square row-stochastic matrix of size `n`.
pub fn check_stochastic(m: &[Vec<f64>], n: usize, what: &str) -> Result<()> {
    if m.len() != n {
        return Err(Error::InvalidModel(format!("{what}: expected {n} rows, got {}", m.len())));
    }
    for (i, row) in m.iter().enumerate() {
        check_probability_vector(row, n, &format!("{what} row {i}"))?;
    }
    Ok(())
}

/// Check that `p` is a probability vector of length `n`.
pub fn check_probability_vector(p: &[f64], n: usize, what: &str) -> Result<()> {
    if p.len() != n {
        return Err(Error::InvalidModel(format!("{what}: expected length {n}, got {}", p.len())));
    }
    if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::InvalidModel(format!("{what}: entry outside [0,1]")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > ROW_EPS {
        return Err(Error::InvalidModel(format!("{what}: sums to {total}")));
    }
    Ok(())
}

/// Stationary distribution `π = π P` of an irreducible chain.
///
/// Solves `(Pᵀ − I) π = 0` with the last equation replaced by `Σ π = 1`,
/// using Gaussian elimination with partial pivoting.
pub fn stationary_distribution(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = p.len();
    check_stochastic(p, n, "transition matrix")?;
    let mut a = vec![vec![0.0; n + 1]; n];
    for (i, row) in a.iter_mut().enumerate().take(n - 1) {
        for (j, cell) in row.iter_mut().enumerate().take(n) {
            *cell = p[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for cell in a[n - 1].iter_mut() {
        *cell = 1.0;
    }
    let pi = solve_augmented(a)
        .ok_or_else(|| Error::InvalidModel("chain has no unique stationary distribution".into()))?;
    Ok(pi.into_iter().map(|x| x.max(0.0)).collect())
}

// Solves the n x (n+1) augmented system in place.
fn solve_augmented(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let factor = a[row][col] / a[col][col];
                if factor != 0.0 {
                    for k in col..=n {
                        a[row][k] -= factor * a[col][k];
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_closed_form() {
        let (a, b) = (0.1, 0.3);
        let pi = stationary_distribution(&[vec![1.0 - a, a], vec![b, 1.0 - b]]).unwrap();
        assert!((pi[0] - b / (a + b)).abs() < 1e-12);
        assert!((pi[1] - a / (a + b)).abs() < 1e-12);
    }

    #[test]
    fn reducible_chain_rejected() {
        assert!(stationary_distribution(&[vec![1.0, 0.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn fixed_point_three_states() {
        let p = vec![
            vec![0.5, 0.25, 0.25],
            vec![0.2, 0.6, 0.2],
            vec![0.1, 0.3, 0.6],
        ];
        let pi = stationary_distribution(&p).unwrap();
        for j in 0..3 {
            let back: f64 = (0..3).map(|i| pi[i] * p[i][j]).sum();
            assert!((back - pi[j]).abs() < 1e-12);
        }
    }
}
