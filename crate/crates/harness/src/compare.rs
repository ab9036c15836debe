//! Model-vs-simulation agreement report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use spacebatch_core::simulator::Aggregate;

use crate::error::{HarnessError, Result};
use crate::experiment::{PointKey, ResultRow, Source};

/// Any point whose throughput error exceeds this fails the comparison outright.
pub const HARD_FAILURE_THROUGHPUT_ERR: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub throughput: f64,
    pub delay: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { throughput: 0.07, delay: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointComparison {
    pub n_nodes: usize,
    pub lambda_pkt_s: f64,
    pub m_antennas: usize,
    pub s_min: usize,
    pub s_max: usize,
    pub snr_db: f64,
    pub model_throughput: f64,
    pub sim_throughput: f64,
    pub throughput_halfwidth: f64,
    /// (model − sim) / sim.
    pub throughput_err: f64,
    pub model_delay: f64,
    pub sim_delay: f64,
    pub delay_halfwidth: f64,
    pub delay_err: f64,
    /// |model − sim| exceeds the half-width by more than the tolerance.
    pub throughput_flagged: bool,
    pub delay_flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bias {
    ModelAbove,
    ModelBelow,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub tolerances: Tolerances,
    pub points: Vec<PointComparison>,
    pub max_throughput_err: f64,
    pub mean_throughput_err: f64,
    pub max_delay_err: f64,
    pub mean_delay_err: f64,
    /// Points where model throughput ≥ simulated throughput.
    pub model_at_or_above: usize,
    /// Sign of the throughput error at three quarters of the points or more.
    pub bias: Bias,
    pub hard_failure: bool,
}

impl CompareReport {
    pub fn flagged(&self) -> usize {
        self.points.iter().filter(|p| p.throughput_flagged || p.delay_flagged).count()
    }
}

fn rel(model: f64, sim: f64) -> f64 {
    if model == sim {
        0.0
    } else {
        (model - sim) / sim.abs()
    }
}

fn halfwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Ok(0.0);
    }
    Ok(Aggregate::from_samples(samples)?.ci95_halfwidth)
}

/// Pairs every model row with the sim_mean row of the same point; sim rows
/// supply the 95% half-widths.
pub fn compare(rows: &[ResultRow], tol: Tolerances) -> Result<CompareReport> {
    let mut model: BTreeMap<PointKey, (usize, &ResultRow)> = BTreeMap::new();
    let mut mean: BTreeMap<PointKey, &ResultRow> = BTreeMap::new();
    let mut reps: BTreeMap<PointKey, Vec<&ResultRow>> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        match row.source {
            Source::Model => {
                model.insert(row.point(), (i, row));
            }
            Source::SimMean => {
                mean.insert(row.point(), row);
            }
            Source::Sim => reps.entry(row.point()).or_default().push(row),
        }
    }
    let model_keys: BTreeSet<_> = model.keys().collect();
    let sim_keys: BTreeSet<_> = mean.keys().collect();
    if model_keys != sim_keys || model_keys.is_empty() {
        return Err(HarnessError::KeyMismatch(format!(
            "{} model points, {} simulated points, {} shared",
            model_keys.len(),
            sim_keys.len(),
            model_keys.intersection(&sim_keys).count()
        )));
    }

    let mut ordered: Vec<_> = model.into_iter().collect();
    ordered.sort_by_key(|(_, (i, _))| *i);
    let mut points = Vec::with_capacity(ordered.len());
    for (key, (_, m)) in ordered {
        let s = mean[&key];
        let runs = reps.get(&key).map(Vec::as_slice).unwrap_or_default();
        let thr_hw = halfwidth(&runs.iter().map(|r| r.throughput_pkt_s).collect::<Vec<_>>())?;
        let delay_hw = halfwidth(&runs.iter().map(|r| r.delay_s).collect::<Vec<_>>())?;
        points.push(PointComparison {
            n_nodes: key.n_nodes,
            lambda_pkt_s: key.lambda(),
            m_antennas: key.m_antennas,
            s_min: key.s_min,
            s_max: key.s_max,
            snr_db: key.snr_db(),
            model_throughput: m.throughput_pkt_s,
            sim_throughput: s.throughput_pkt_s,
            throughput_halfwidth: thr_hw,
            throughput_err: rel(m.throughput_pkt_s, s.throughput_pkt_s),
            model_delay: m.delay_s,
            sim_delay: s.delay_s,
            delay_halfwidth: delay_hw,
            delay_err: rel(m.delay_s, s.delay_s),
            // Negated so a NaN sim value (nothing delivered) is flagged.
            throughput_flagged: !((m.throughput_pkt_s - s.throughput_pkt_s).abs()
                <= thr_hw + tol.throughput * s.throughput_pkt_s.abs()),
            delay_flagged: !((m.delay_s - s.delay_s).abs() <= delay_hw + tol.delay * s.delay_s.abs()),
        });
    }

    let nan_max = |a: f64, b: f64| if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) };
    let n = points.len() as f64;
    let abs_thr = points.iter().map(|p| p.throughput_err.abs());
    let abs_delay = points.iter().map(|p| p.delay_err.abs());
    let model_at_or_above = points.iter().filter(|p| p.model_throughput >= p.sim_throughput).count();
    let strictly_below = points.iter().filter(|p| p.model_throughput < p.sim_throughput).count();
    let bias = if model_at_or_above as f64 >= 0.75 * n {
        Bias::ModelAbove
    } else if strictly_below as f64 >= 0.75 * n {
        Bias::ModelBelow
    } else {
        Bias::Mixed
    };
    Ok(CompareReport {
        tolerances: tol,
        max_throughput_err: abs_thr.clone().fold(0.0, nan_max),
        mean_throughput_err: abs_thr.sum::<f64>() / n,
        max_delay_err: abs_delay.clone().fold(0.0, nan_max),
        mean_delay_err: abs_delay.sum::<f64>() / n,
        hard_failure: points.iter().any(|p| !(p.throughput_err.abs() <= HARD_FAILURE_THROUGHPUT_ERR)),
        model_at_or_above,
        bias,
        points,
    })
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>4} {:>7} {:>3} {:>5} {:>6} | {:>10} {:>10} {:>8} | {:>9} {:>9} {:>8}",
            "N", "lambda", "M", "s", "snr", "S_model", "S_sim", "err", "D_model", "D_sim", "err"
        )?;
        for p in &self.points {
            writeln!(
                f,
                "{:>4} {:>7} {:>3} {:>5} {:>6} | {:>10.3} {:>10.3} {:>+7.2}%{} | {:>9.4} {:>9.4} {:>+7.2}%{}",
                p.n_nodes,
                p.lambda_pkt_s,
                p.m_antennas,
                format!("{}-{}", p.s_min, p.s_max),
                p.snr_db,
                p.model_throughput,
                p.sim_throughput,
                100.0 * p.throughput_err,
                if p.throughput_flagged { "*" } else { " " },
                p.model_delay,
                p.sim_delay,
                100.0 * p.delay_err,
                if p.delay_flagged { "*" } else { " " },
            )?;
        }
        writeln!(
            f,
            "throughput error max {:.2}% mean {:.2}%; delay error max {:.2}% mean {:.2}%",
            100.0 * self.max_throughput_err,
            100.0 * self.mean_throughput_err,
            100.0 * self.max_delay_err,
            100.0 * self.mean_delay_err
        )?;
        let bias = match self.bias {
            Bias::ModelAbove => "model throughput above simulation",
            Bias::ModelBelow => "model throughput below simulation",
            Bias::Mixed => "no consistent sign",
        };
        writeln!(
            f,
            "bias: {bias} ({} of {} points at or above); {} point(s) flagged (*)",
            self.model_at_or_above,
            self.points.len(),
            self.flagged()
        )?;
        if self.hard_failure {
            writeln!(
                f,
                "FAILURE: throughput error above {:.0}%",
                100.0 * HARD_FAILURE_THROUGHPUT_ERR
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize, source: Source, replication: i64, thr: f64, delay: f64) -> ResultRow {
        ResultRow {
            n_nodes: n,
            lambda_pkt_s: 5.0,
            m_antennas: 2,
            s_min: 1,
            s_max: 2,
            snr_db: 20.0,
            source,
            replication,
            throughput_pkt_s: thr,
            delay_s: delay,
            blocking_prob: 0.0,
            collision_prob: 0.0,
            rho: 0.1,
            converged: true,
            iterations: 0,
        }
    }

    #[test]
    fn identical_tables_have_zero_error() {
        let rows = vec![
            row(2, Source::Model, -1, 10.0, 0.02),
            row(2, Source::SimMean, -1, 10.0, 0.02),
            row(4, Source::Model, -1, 20.0, 0.03),
            row(4, Source::SimMean, -1, 20.0, 0.03),
        ];
        let r = compare(&rows, Tolerances::default()).unwrap();
        assert_eq!(r.max_throughput_err, 0.0);
        assert_eq!(r.max_delay_err, 0.0);
        assert_eq!(r.flagged(), 0);
        assert!(!r.hard_failure);
        assert_eq!(r.points.iter().map(|p| p.n_nodes).collect::<Vec<_>>(), vec![2, 4]);
    }

    #[test]
    fn systematic_excess_is_reported_as_bias() {
        let mut rows = Vec::new();
        for n in [2, 4, 8, 12] {
            rows.push(row(n, Source::Model, -1, 1.02 * n as f64, 0.02));
            rows.push(row(n, Source::SimMean, -1, n as f64, 0.02));
        }
        let r = compare(&rows, Tolerances::default()).unwrap();
        assert_eq!(r.bias, Bias::ModelAbove);
        assert_eq!(r.model_at_or_above, 4);
        assert!((r.max_throughput_err - 0.02).abs() < 1e-12);
        assert!(r.to_string().contains("model throughput above simulation"));
    }

    #[test]
    fn large_error_is_a_hard_failure_and_flagged() {
        let rows = vec![
            row(2, Source::Model, -1, 13.0, 0.02),
            row(2, Source::Sim, 0, 9.9, 0.02),
            row(2, Source::Sim, 1, 10.1, 0.02),
            row(2, Source::SimMean, -1, 10.0, 0.02),
        ];
        let r = compare(&rows, Tolerances::default()).unwrap();
        assert!(r.hard_failure);
        assert!(r.points[0].throughput_flagged && !r.points[0].delay_flagged);
        assert!(r.points[0].throughput_halfwidth > 0.0);
    }

    #[test]
    fn half_width_absorbs_noise() {
        let rows = vec![
            row(2, Source::Model, -1, 10.9, 0.02),
            row(2, Source::Sim, 0, 9.0, 0.02),
            row(2, Source::Sim, 1, 11.0, 0.02),
            row(2, Source::SimMean, -1, 10.0, 0.02),
        ];
        let r = compare(&rows, Tolerances::default()).unwrap();
        assert!(!r.points[0].throughput_flagged);
    }

    #[test]
    fn mismatched_points_are_rejected() {
        let rows = vec![row(2, Source::Model, -1, 10.0, 0.02), row(4, Source::SimMean, -1, 10.0, 0.02)];
        assert!(matches!(compare(&rows, Tolerances::default()), Err(HarnessError::KeyMismatch(_))));
        assert!(compare(&[], Tolerances::default()).is_err());
    }
}
