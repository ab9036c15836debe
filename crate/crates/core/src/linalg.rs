//! Dense stationary-distribution solver shared by the Markov chains.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest chain the dense solver accepts.
pub const MAX_DENSE_STATES: usize = 10_000;

const RESIDUAL_LIMIT: f64 = 1e-10;

/// `‖πP − π‖∞`.
pub fn stationary_residual(p: &DMatrix<f64>, pi: &[f64]) -> f64 {
    let n = pi.len();
    (0..n)
        .map(|j| {
            let flow: f64 = (0..n).map(|i| pi[i] * p[(i, j)]).sum();
            (flow - pi[j]).abs()
        })
        .fold(0.0, f64::max)
}

/// Left stationary vector of a row-stochastic matrix.
///
/// Solves `π(P − I) = 0` with the last balance equation swapped for
/// `Σπ = 1`. A singular system means more than one closed class. Falls back
/// to power iteration when the direct solve leaves a residual above 1e-10.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p.nrows();
    if n != p.ncols() || n == 0 {
        return Err(Error::ReducibleChain);
    }
    if n > MAX_DENSE_STATES {
        return Err(Error::StateSpaceTooLarge(n));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }

    // Transposed system: (P^T - I) π^T = 0.
    let mut a = p.transpose() - DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[n - 1] = 1.0;

    let Some(sol) = a.lu().solve(&rhs) else {
        return Err(Error::ReducibleChain);
    };
    {
        let pi: Vec<f64> = sol.iter().map(|&v| v.max(0.0)).collect();
        let total: f64 = pi.iter().sum();
        if total > 0.0 && total.is_finite() {
            let pi: Vec<f64> = pi.iter().map(|v| v / total).collect();
            if stationary_residual(p, &pi) < RESIDUAL_LIMIT {
                return Ok(pi);
            }
        }
    }
    power_iteration(p)
}

fn power_iteration(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p.nrows();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..1_000_000 {
        for j in 0..n {
            // Lazy chain (P + I)/2 shares π and is aperiodic.
            next[j] = 0.5 * pi[j] + 0.5 * (0..n).map(|i| pi[i] * p[(i, j)]).sum::<f64>();
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        std::mem::swap(&mut pi, &mut next);
        if stationary_residual(p, &pi) < RESIDUAL_LIMIT {
            return Ok(pi);
        }
    }
    Err(Error::ReducibleChain)
}
