//! Batch-service M/G^[s_min, s_max]/1/K queue of a single node.
//!
//! The queue is observed right after departures (an embedded chain over
//! 0..=K - s_min), then lifted to arbitrary times with PASTA. Service times
//! are exponential with mean E[X(s)], so the number of arrivals during a
//! service is geometric.
//!
//! Rates and durations must share a time unit; [`solve_queue`] works in µs.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{stationary_distribution, MAX_DENSE_STATES};
use crate::phy_timing::ScenarioConfig;

/// Batch size scheduled when `q` packets are queued.
pub fn batch_size_policy(q: usize, s_min: usize, s_max: usize) -> usize {
    s_min.max(q.min(s_max))
}

/// A distribution over batch sizes s_min..=s_max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSizeDist {
    s_min: usize,
    probs: Vec<f64>,
}

impl BatchSizeDist {
    /// `probs[k]` is the mass of size `s_min + k`.
    pub fn new(s_min: usize, probs: Vec<f64>) -> Self {
        assert!(s_min >= 1 && !probs.is_empty());
        BatchSizeDist { s_min, probs }
    }

    pub fn degenerate(s_min: usize, s_max: usize, at: usize) -> Self {
        let mut probs = vec![0.0; s_max - s_min + 1];
        probs[at - s_min] = 1.0;
        BatchSizeDist { s_min, probs }
    }

    pub fn s_min(&self) -> usize {
        self.s_min
    }

    pub fn s_max(&self) -> usize {
        self.s_min + self.probs.len() - 1
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, s: usize) -> f64 {
        if s < self.s_min || s > self.s_max() {
            0.0
        } else {
            self.probs[s - self.s_min]
        }
    }

    pub fn sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.s_min..=self.s_max()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.sizes().zip(self.probs.iter().copied())
    }
}

/// P(V = v) for V arrivals during an exponential service of rate `mu`.
pub fn arrival_count_pmf(v: usize, lambda: f64, mu: f64) -> f64 {
    let total = mu + lambda;
    mu / total * (lambda / total).powi(v as i32)
}

fn check_size(k: usize, s_min: usize) -> Result<usize> {
    let n = k + 1 - s_min;
    if n > MAX_DENSE_STATES {
        return Err(Error::StateSpaceTooLarge(n));
    }
    Ok(n)
}

/// Departure-instant transition matrix over states 0..=K - s_min.
///
/// `ex_by_size[s - s_min]` is E[X(s)]. From state `i` the chain reaches
/// `[i - s_max]^+ ..= K - s(i)`; the last reachable state absorbs the tail
/// of the arrival distribution (arrivals blocked by a full queue).
pub fn transition_matrix(lambda: f64, ex_by_size: &[f64], k: usize, s_min: usize, s_max: usize) -> Result<DMatrix<f64>> {
    let n = check_size(k, s_min)?;
    let mut p = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let s = batch_size_policy(i, s_min, s_max);
        let mu = 1.0 / ex_by_size[s - s_min];
        let first = i.saturating_sub(s_max);
        let last = k - s;
        let mut acc = 0.0;
        for j in first..last {
            let pij = arrival_count_pmf(j - first, lambda, mu);
            p[(i, j)] = pij;
            acc += pij;
        }
        p[(i, last)] = (1.0 - acc).max(0.0);
    }
    Ok(p)
}

/// π^d, the stationary distribution of the departure chain.
pub fn departure_distribution(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    stationary_distribution(p)
}

/// Ψ(s): probability that a freshly scheduled batch has `s` packets.
pub fn initial_batch_distribution(pi_d: &[f64], s_min: usize, s_max: usize) -> BatchSizeDist {
    let mut probs = vec![0.0; s_max - s_min + 1];
    for (q, w) in pi_d.iter().enumerate() {
        probs[batch_size_policy(q, s_min, s_max) - s_min] += w;
    }
    BatchSizeDist::new(s_min, probs)
}

/// E[T(i)] for every departure state, and E[T] = Σ π^d_i E[T(i)].
///
/// States below s_min first idle until s_min packets have arrived.
pub fn epoch_durations(pi_d: &[f64], ex_by_size: &[f64], lambda: f64, s_min: usize, s_max: usize) -> (Vec<f64>, f64) {
    let et_i: Vec<f64> = (0..pi_d.len())
        .map(|i| {
            let idle = s_min.saturating_sub(i) as f64 / lambda;
            idle + ex_by_size[batch_size_policy(i, s_min, s_max) - s_min]
        })
        .collect();
    let et = pi_d.iter().zip(&et_i).map(|(w, t)| w * t).sum();
    (et_i, et)
}

/// π^s over 0..=K from the departure chain via PASTA.
///
/// An arrival during departure epoch `i` sees level `k` iff `k >= i` and the
/// queue grows past `k` before the next departure, i.e. `j >= k + 1 - s(i)`.
pub fn steady_state_distribution(
    pi_d: &[f64],
    p: &DMatrix<f64>,
    et: f64,
    lambda: f64,
    k: usize,
    s_min: usize,
    s_max: usize,
) -> Result<Vec<f64>> {
    let n = pi_d.len();
    let scale = 1.0 / (lambda * et);
    let mut pi_s = vec![0.0; k + 1];
    for (level, slot) in pi_s.iter_mut().enumerate().take(k) {
        let mut acc = 0.0;
        for (i, &w) in pi_d.iter().enumerate().take(level.min(n - 1) + 1) {
            let s = batch_size_policy(i, s_min, s_max);
            let first = (level + 1).saturating_sub(s).max(i.saturating_sub(s_max));
            let tail: f64 = (first..=(k - s)).map(|j| p[(i, j)]).sum();
            acc += w * tail;
        }
        *slot = scale * acc;
    }
    let rest = 1.0 - pi_s[..k].iter().sum::<f64>();
    if rest < -1e-9 {
        return Err(Error::InconsistentSteadyState(rest));
    }
    if rest < -1e-12 {
        warn!("clamping pi_s[K] = {rest:e} to zero");
    }
    pi_s[k] = rest.max(0.0);
    Ok(pi_s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueMetrics {
    /// Aggregate network throughput S, packets/s.
    pub throughput: f64,
    /// Mean queueing delay E[D], seconds.
    pub delay: f64,
    pub blocking: f64,
    pub mean_queue: f64,
    /// Probability of holding at least s_min packets.
    pub rho: f64,
}

/// Network metrics from one node's π^s; `lambda` in packets/s.
pub fn metrics(pi_s: &[f64], lambda: f64, n_nodes: usize, s_min: usize) -> Result<QueueMetrics> {
    let k = pi_s.len() - 1;
    let blocking = pi_s[k];
    let accepted = lambda * (1.0 - blocking);
    let mean_queue: f64 = pi_s.iter().enumerate().map(|(q, w)| q as f64 * w).sum();
    if !(accepted > 0.0) {
        return Err(Error::NoThroughput);
    }
    Ok(QueueMetrics {
        throughput: n_nodes as f64 * accepted,
        delay: mean_queue / accepted,
        blocking,
        mean_queue,
        rho: 1.0 - pi_s[..s_min].iter().sum::<f64>(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepartureChain {
    pub k: usize,
    pub s_min: usize,
    pub s_max: usize,
    pub p: DMatrix<f64>,
    pub pi_d: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub pi_s: Vec<f64>,
    pub psi: BatchSizeDist,
    /// E[T(i)] in µs.
    pub et_i: Vec<f64>,
    pub et: f64,
    pub metrics: QueueMetrics,
}

/// Full queue solve for one node; `ex_by_size` in µs for s_min..=s_max.
pub fn solve_queue(cfg: &ScenarioConfig, ex_by_size: &[f64]) -> Result<(DepartureChain, SteadyState)> {
    let (k, s_min, s_max) = (cfg.buffer_size, cfg.s_min, cfg.s_max);
    let lambda_us = cfg.arrival_rate * 1e-6;
    let p = transition_matrix(lambda_us, ex_by_size, k, s_min, s_max)?;
    let pi_d = departure_distribution(&p)?;
    let psi = initial_batch_distribution(&pi_d, s_min, s_max);
    let (et_i, et) = epoch_durations(&pi_d, ex_by_size, lambda_us, s_min, s_max);
    let pi_s = steady_state_distribution(&pi_d, &p, et, lambda_us, k, s_min, s_max)?;
    let metrics = metrics(&pi_s, cfg.arrival_rate, cfg.n_nodes, s_min)?;
    Ok((
        DepartureChain { k, s_min, s_max, p, pi_d },
        SteadyState { pi_s, psi, et_i, et, metrics },
    ))
}
