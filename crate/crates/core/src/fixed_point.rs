//! Damped fixed-point iteration coupling the queue and the channel access.
//!
//! ρ (how often a node has a batch ready) sets the contention; contention
//! sets the service times; service times set the queue and hence ρ again.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy_timing::ScenarioConfig;
use crate::queue_model::{solve_queue, BatchSizeDist, DepartureChain, QueueMetrics, SteadyState};
use crate::retx_chains::RetxTables;
use crate::scenario::Scenario;
use crate::service_model::{service_pass, ContentionState, ServiceTimes};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Maximum relative change of (ρ, p, E[X(s)]) between iterations.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Weight α of the new ρ: ρ ← (1 − α)ρ + αρ_new.
    pub damping: f64,
    pub initial_rho: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tolerance: 1e-6,
            max_iters: 10_000,
            damping: 0.5,
            initial_rho: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSolution {
    pub config: ScenarioConfig,
    pub contention: ContentionState,
    pub service: ServiceTimes,
    pub chain: DepartureChain,
    pub steady: SteadyState,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

impl ModelSolution {
    pub fn metrics(&self) -> &QueueMetrics {
        &self.steady.metrics
    }
}

fn rel_change(new: f64, old: f64) -> f64 {
    let scale = new.abs().max(old.abs());
    if scale == 0.0 {
        0.0
    } else {
        (new - old).abs() / scale
    }
}

pub fn solve(cfg: &ScenarioConfig, opts: &SolveOptions) -> Result<ModelSolution> {
    solve_scenario(&Scenario::new(cfg.clone())?, opts)
}

pub fn solve_scenario(scn: &Scenario, opts: &SolveOptions) -> Result<ModelSolution> {
    let cfg = &scn.config;
    let retx = RetxTables::new(&scn.per)?;
    let mut rho = opts.initial_rho.clamp(0.0, 1.0);
    let mut psi = BatchSizeDist::degenerate(cfg.s_min, cfg.s_max, cfg.s_max);
    let mut previous: Option<(f64, f64, Vec<f64>)> = None;
    let mut trace = Vec::new();

    for iteration in 1..=opts.max_iters {
        let (contention, service) = service_pass(rho, &psi, &retx, &scn.timing, cfg)?;
        let (chain, steady) = solve_queue(cfg, &service.ex)?;
        let rho_new = steady.metrics.rho;

        let residual = match &previous {
            None => f64::INFINITY,
            Some((rho_prev, p_prev, ex_prev)) => service
                .ex
                .iter()
                .zip(ex_prev)
                .map(|(a, b)| rel_change(*a, *b))
                .fold(rel_change(rho_new, *rho_prev).max(rel_change(contention.p, *p_prev)), f64::max),
        };
        trace.push(residual);
        if trace.len() > 32 {
            trace.remove(0);
        }
        previous = Some((rho_new, contention.p, service.ex.clone()));
        psi = steady.psi.clone();

        let converged = residual < opts.tolerance;
        let solution = ModelSolution {
            config: cfg.clone(),
            contention,
            service,
            chain,
            steady,
            iterations: iteration,
            residual,
            converged,
        };
        if converged {
            return Ok(solution);
        }
        if iteration == opts.max_iters {
            return Err(Error::NonConvergence {
                iterations: iteration,
                residual,
                trace,
                last: Box::new(solution),
            });
        }
        rho = (1.0 - opts.damping) * rho + opts.damping * rho_new;
    }
    unreachable!("max_iters is at least one iteration")
}

/// Scenario fields a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepField {
    NNodes,
    ArrivalRate,
    MAntennas,
    SMin,
    SMax,
    SnrDb,
}

impl SweepField {
    pub const ALL: [SweepField; 6] = [
        SweepField::NNodes,
        SweepField::ArrivalRate,
        SweepField::MAntennas,
        SweepField::SMin,
        SweepField::SMax,
        SweepField::SnrDb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepField::NNodes => "n_nodes",
            SweepField::ArrivalRate => "arrival_rate",
            SweepField::MAntennas => "m_antennas",
            SweepField::SMin => "s_min",
            SweepField::SMax => "s_max",
            SweepField::SnrDb => "snr_db",
        }
    }

    /// A copy of `cfg` with this field set to `value`.
    pub fn apply(self, cfg: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let count = || {
            if value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(Error::InvalidConfig(format!("{} needs a whole number, got {value}", self.name())))
            }
        };
        let mut out = cfg.clone();
        match self {
            SweepField::NNodes => out.n_nodes = count()?,
            SweepField::ArrivalRate => out.arrival_rate = value,
            SweepField::MAntennas => out.m_antennas = count()?,
            SweepField::SMin => out.s_min = count()?,
            SweepField::SMax => out.s_max = count()?,
            SweepField::SnrDb => out.snr_db = value,
        }
        Ok(out)
    }
}

impl fmt::Display for SweepField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepField::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidSweepField(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub field: SweepField,
    pub values: Vec<f64>,
}

/// Solves every point of `axis`; a failing point does not stop the others.
pub fn sweep(cfg: &ScenarioConfig, axis: &SweepAxis, opts: &SolveOptions) -> Vec<Result<ModelSolution>> {
    axis.values
        .par_iter()
        .map(|&v| solve(&axis.field.apply(cfg, v)?, opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, lambda: f64) -> ScenarioConfig {
        ScenarioConfig {
            n_nodes: n,
            arrival_rate: lambda,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn single_node_converges_immediately() {
        for rho0 in [0.0, 0.3, 1.0] {
            let opts = SolveOptions { initial_rho: rho0, ..SolveOptions::default() };
            let sol = solve(&cfg(1, 5.0), &opts).unwrap();
            assert!(sol.iterations <= 2, "{}", sol.iterations);
            assert_eq!(sol.contention.p, 0.0);
            assert_eq!(sol.contention.gamma, 20.0);
        }
    }

    #[test]
    fn light_traffic_limit() {
        let sol = solve(&cfg(6, 1e-3), &SolveOptions::default()).unwrap();
        let m = sol.metrics();
        assert!(m.rho < 1e-4);
        assert!(m.blocking < 1e-12);
        assert!((m.throughput - 6e-3).abs() < 1e-12);
    }

    #[test]
    fn deterministic() {
        let a = solve(&cfg(8, 15.0), &SolveOptions::default()).unwrap();
        let b = solve(&cfg(8, 15.0), &SolveOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.metrics().throughput.to_bits(), b.metrics().throughput.to_bits());
    }

    #[test]
    fn solution_invariants() {
        for n in [2, 8, 20] {
            let sol = solve(&cfg(n, 15.0), &SolveOptions::default()).unwrap();
            assert!(sol.converged && sol.residual <= 1e-6);
            assert!((sol.steady.pi_s.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!((sol.steady.psi.probs().iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!((sol.chain.pi_d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let c = &sol.contention;
            assert!((c.p_e + c.p_cf + c.p_c - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn iteration_budget_exhaustion_is_reported() {
        let opts = SolveOptions { max_iters: 1, ..SolveOptions::default() };
        match solve(&cfg(8, 15.0), &opts) {
            Err(Error::NonConvergence { iterations, last, .. }) => {
                assert_eq!(iterations, 1);
                assert!(!last.converged);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn sweep_fields() {
        assert_eq!("snr_db".parse::<SweepField>().unwrap(), SweepField::SnrDb);
        assert!(matches!("cw".parse::<SweepField>(), Err(Error::InvalidSweepField(_))));
        assert!(SweepField::NNodes.apply(&cfg(2, 5.0), 2.5).is_err());

        let axis = SweepAxis { field: SweepField::NNodes, values: vec![2.0, 4.0, 8.0] };
        let out = sweep(&cfg(2, 5.0), &axis, &SolveOptions::default());
        assert_eq!(out.len(), 3);
        let ns: Vec<usize> = out.iter().map(|r| r.as_ref().unwrap().config.n_nodes).collect();
        assert_eq!(ns, vec![2, 4, 8]);

        // An invalid point is recorded, the rest still solve.
        let axis = SweepAxis { field: SweepField::SMax, values: vec![2.0, 3.0] };
        let out = sweep(&cfg(2, 5.0), &axis, &SolveOptions::default());
        assert!(out[0].is_ok());
        assert!(matches!(out[1], Err(Error::InvalidConfig(_))));
    }
}
