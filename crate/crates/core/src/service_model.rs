//! Slot-level contention and the expected service time of a space-batch.
//!
//! Every function is a single pass over its inputs; the coupling between
//! these quantities and the queue is resolved by [`crate::fixed_point`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy_timing::{ScenarioConfig, TimingTable};
use crate::queue_model::BatchSizeDist;
use crate::retx_chains::{expected_attempts_per_cf, RetxTables};

/// E[B] for a uniform draw on [0, CW - 1].
pub fn mean_backoff_slots(cw: u32) -> f64 {
    (cw as f64 - 1.0) / 2.0
}

/// τ = ρ / (E[B] + 1).
pub fn tx_probability(rho: f64, cw: u32) -> f64 {
    rho / (mean_backoff_slots(cw) + 1.0)
}

pub fn collision_probability(tau: f64, n_nodes: usize) -> f64 {
    1.0 - (1.0 - tau).powi(n_nodes as i32 - 1)
}

/// What a backing-off node sees in one of its slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotProbabilities {
    pub p_e: f64,
    pub p_cf: f64,
    pub p_c: f64,
}

pub fn slot_probabilities(tau: f64, n_nodes: usize) -> SlotProbabilities {
    let others = n_nodes as i32 - 1;
    let p_e = (1.0 - tau).powi(others);
    let p_cf = if others == 0 {
        0.0
    } else {
        others as f64 * tau * (1.0 - tau).powi(others - 1)
    };
    SlotProbabilities {
        p_e,
        p_cf,
        p_c: (1.0 - p_e - p_cf).max(0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentionState {
    pub tau: f64,
    pub tau_sat: f64,
    pub rho: f64,
    pub p: f64,
    pub p_e: f64,
    pub p_cf: f64,
    pub p_c: f64,
    /// Mean backoff-slot duration γ, µs. Filled in once T̄ values are known.
    pub gamma: f64,
    pub eb: f64,
}

impl ContentionState {
    /// Contention quantities implied by ρ; `gamma` starts at σ.
    pub fn from_rho(rho: f64, cfg: &ScenarioConfig) -> Self {
        let eb = mean_backoff_slots(cfg.cw);
        let tau_sat = tx_probability(1.0, cfg.cw);
        let tau = rho * tau_sat;
        let slots = slot_probabilities(tau, cfg.n_nodes);
        ContentionState {
            tau,
            tau_sat,
            rho,
            p: collision_probability(tau, cfg.n_nodes),
            p_e: slots.p_e,
            p_cf: slots.p_cf,
            p_c: slots.p_c,
            gamma: cfg.slot_sigma as f64,
            eb,
        }
    }

    pub fn slots(&self) -> SlotProbabilities {
        SlotProbabilities {
            p_e: self.p_e,
            p_cf: self.p_cf,
            p_c: self.p_c,
        }
    }
}

/// T̄_cf(s) = Σ_m p_{m|s} T_cf(m).
pub fn expected_cf_duration_for(s: usize, retx: &RetxTables, timing: &TimingTable) -> f64 {
    retx.attempt_sizes(s)
        .iter()
        .enumerate()
        .map(|(idx, p)| p * timing.t_cf(idx + 1) as f64)
        .sum()
}

/// T̄_cf(s) for every s in the support of Ψ, and their Ψ-average.
pub fn expected_cf_duration(psi: &BatchSizeDist, retx: &RetxTables, timing: &TimingTable) -> (Vec<f64>, f64) {
    let per_s: Vec<f64> = psi.sizes().map(|s| expected_cf_duration_for(s, retx, timing)).collect();
    let avg = psi.probs().iter().zip(&per_s).map(|(w, t)| w * t).sum();
    (per_s, avg)
}

/// Collision length when our batch of initial size `s` meets one other
/// batch drawn from Ψ (collisions of three or more are ignored).
pub fn expected_collision_duration_for(
    s: usize,
    psi: &BatchSizeDist,
    retx: &RetxTables,
    timing: &TimingTable,
) -> f64 {
    let ours = retx.attempt_sizes(s);
    psi.iter()
        .map(|(s1, w)| {
            let theirs = retx.attempt_sizes(s1);
            let inner: f64 = theirs
                .iter()
                .enumerate()
                .map(|(i, pi)| {
                    pi * ours
                        .iter()
                        .enumerate()
                        .map(|(j, pj)| pj * timing.t_c((i + 1).max(j + 1)) as f64)
                        .sum::<f64>()
                })
                .sum();
            w * inner
        })
        .sum()
}

pub fn expected_collision_duration(psi: &BatchSizeDist, retx: &RetxTables, timing: &TimingTable) -> (Vec<f64>, f64) {
    let per_s: Vec<f64> = psi
        .sizes()
        .map(|s| expected_collision_duration_for(s, psi, retx, timing))
        .collect();
    let avg = psi.probs().iter().zip(&per_s).map(|(w, t)| w * t).sum();
    (per_s, avg)
}

/// γ: empty slots last σ, busy ones the transmission plus DIFS and one slot.
pub fn avg_slot_duration(slots: SlotProbabilities, t_cf_bar: f64, t_c_bar: f64, difs: u64, sigma: u64) -> f64 {
    let (difs, sigma) = (difs as f64, sigma as f64);
    slots.p_e * sigma + slots.p_cf * (t_cf_bar + difs + sigma) + slots.p_c * (t_c_bar + difs + sigma)
}

/// Per-batch inputs to E[X(s)].
#[derive(Debug, Clone, Copy)]
pub struct BatchAttempts {
    /// Υ_cf(s).
    pub upsilon_cf: f64,
    pub t_cf_bar: f64,
    pub t_c_bar: f64,
}

/// E[X(s)] = Υ(s)·E[B]·γ + Υ_cf(s)·[(T̄_cf(s) + DIFS + σ) + (Υ_c − 1)(T̄_c(s) + DIFS + σ)].
pub fn expected_service_time(
    batch: BatchAttempts,
    contention: &ContentionState,
    difs: u64,
    sigma: u64,
) -> Result<f64> {
    let upsilon_c = expected_attempts_per_cf(contention.p)?;
    let overhead = (difs + sigma) as f64;
    let backoff = batch.upsilon_cf * upsilon_c * contention.eb * contention.gamma;
    let airtime = batch.upsilon_cf * ((batch.t_cf_bar + overhead) + (upsilon_c - 1.0) * (batch.t_c_bar + overhead));
    let ex = backoff + airtime;
    if !ex.is_finite() {
        return Err(Error::SaturationDivergence(contention.p));
    }
    Ok(ex)
}

/// E[X] = Σ_s Ψ(s) E[X(s)], with `ex` aligned to Ψ's support.
pub fn mean_service_time(psi: &BatchSizeDist, ex: &[f64]) -> f64 {
    psi.probs().iter().zip(ex).map(|(w, x)| w * x).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceTimes {
    pub s_min: usize,
    /// E[X(s)] in µs for s = s_min..=s_max.
    pub ex: Vec<f64>,
    pub ex_mean: f64,
    pub t_cf_bar_s: Vec<f64>,
    pub t_cf_bar: f64,
    pub t_c_bar_s: Vec<f64>,
    pub t_c_bar: f64,
    /// Υ(s) = Υ_cf(s)·Υ_c.
    pub upsilon: Vec<f64>,
}

impl ServiceTimes {
    pub fn ex_for(&self, s: usize) -> f64 {
        self.ex[s - self.s_min]
    }
}

/// One pass of the service layer: given ρ and the previous Ψ, compute γ and
/// every E[X(s)].
pub fn service_pass(
    rho: f64,
    psi: &BatchSizeDist,
    retx: &RetxTables,
    timing: &TimingTable,
    cfg: &ScenarioConfig,
) -> Result<(ContentionState, ServiceTimes)> {
    let mut contention = ContentionState::from_rho(rho, cfg);
    let upsilon_c = expected_attempts_per_cf(contention.p)?;
    let (t_cf_bar_s, t_cf_bar) = expected_cf_duration(psi, retx, timing);
    let (t_c_bar_s, t_c_bar) = expected_collision_duration(psi, retx, timing);
    contention.gamma = avg_slot_duration(contention.slots(), t_cf_bar, t_c_bar, cfg.difs, cfg.slot_sigma);

    let mut ex = Vec::with_capacity(psi.len());
    let mut upsilon = Vec::with_capacity(psi.len());
    for (k, s) in psi.sizes().enumerate() {
        let batch = BatchAttempts {
            upsilon_cf: retx.upsilon_cf(s),
            t_cf_bar: t_cf_bar_s[k],
            t_c_bar: t_c_bar_s[k],
        };
        ex.push(expected_service_time(batch, &contention, cfg.difs, cfg.slot_sigma)?);
        upsilon.push(batch.upsilon_cf * upsilon_c);
    }
    let ex_mean = mean_service_time(psi, &ex);
    Ok((
        contention,
        ServiceTimes {
            s_min: psi.s_min(),
            ex,
            ex_mean,
            t_cf_bar_s,
            t_cf_bar,
            t_c_bar_s,
            t_c_bar,
            upsilon,
        },
    ))
}
