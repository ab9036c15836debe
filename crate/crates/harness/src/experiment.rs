//! Sweeps of model solves and simulation replications, and the result table.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use spacebatch_core::simulator::{simulate, CsvTrace, Replication, SimOptions, SimStats};
use spacebatch_core::{solve_scenario, Error, ModelSolution, Scenario, ScenarioConfig, SolveOptions, SweepAxis};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Model,
    Sim,
    Both,
}

impl Mode {
    fn model(self) -> bool {
        self != Mode::Sim
    }

    fn sim(self) -> bool {
        self != Mode::Model
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Model,
    Sim,
    SimMean,
}

/// One output line. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub n_nodes: usize,
    pub lambda_pkt_s: f64,
    pub m_antennas: usize,
    pub s_min: usize,
    pub s_max: usize,
    pub snr_db: f64,
    pub source: Source,
    /// Seed index for `sim` rows, −1 otherwise.
    pub replication: i64,
    pub throughput_pkt_s: f64,
    pub delay_s: f64,
    pub blocking_prob: f64,
    pub collision_prob: f64,
    pub rho: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl ResultRow {
    fn keyed(cfg: &ScenarioConfig, source: Source, replication: i64) -> Self {
        ResultRow {
            n_nodes: cfg.n_nodes,
            lambda_pkt_s: cfg.arrival_rate,
            m_antennas: cfg.m_antennas,
            s_min: cfg.s_min,
            s_max: cfg.s_max,
            snr_db: cfg.snr_db,
            source,
            replication,
            throughput_pkt_s: f64::NAN,
            delay_s: f64::NAN,
            blocking_prob: f64::NAN,
            collision_prob: f64::NAN,
            rho: f64::NAN,
            converged: true,
            iterations: 0,
        }
    }

    pub fn from_model(sol: &ModelSolution) -> Self {
        let m = sol.metrics();
        ResultRow {
            throughput_pkt_s: m.throughput,
            delay_s: m.delay,
            blocking_prob: m.blocking,
            collision_prob: sol.contention.p,
            rho: m.rho,
            converged: sol.converged,
            iterations: sol.iterations,
            ..Self::keyed(&sol.config, Source::Model, -1)
        }
    }

    pub fn from_sim(cfg: &ScenarioConfig, replication: usize, stats: &SimStats) -> Self {
        ResultRow {
            throughput_pkt_s: stats.throughput(),
            delay_s: stats.delay_s(),
            blocking_prob: stats.blocking_prob(),
            collision_prob: stats.collision_prob(),
            rho: stats.rho(),
            ..Self::keyed(cfg, Source::Sim, replication as i64)
        }
    }

    pub fn sim_mean(cfg: &ScenarioConfig, rep: &Replication) -> Self {
        ResultRow {
            throughput_pkt_s: rep.throughput.mean,
            delay_s: rep.delay.mean,
            blocking_prob: rep.blocking.mean,
            collision_prob: rep.collision.mean,
            rho: rep.rho.mean,
            ..Self::keyed(cfg, Source::SimMean, -1)
        }
    }

    /// Scenario coordinates of the row, comparable across sources.
    pub fn point(&self) -> PointKey {
        PointKey {
            n_nodes: self.n_nodes,
            lambda_bits: self.lambda_pkt_s.to_bits(),
            m_antennas: self.m_antennas,
            s_min: self.s_min,
            s_max: self.s_max,
            snr_bits: self.snr_db.to_bits(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointKey {
    pub n_nodes: usize,
    lambda_bits: u64,
    pub m_antennas: usize,
    pub s_min: usize,
    pub s_max: usize,
    snr_bits: u64,
}

impl PointKey {
    pub fn lambda(&self) -> f64 {
        f64::from_bits(self.lambda_bits)
    }

    pub fn snr_db(&self) -> f64 {
        f64::from_bits(self.snr_bits)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub base: ScenarioConfig,
    pub sweep: Option<SweepAxis>,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub sim_time_us: u64,
    pub warmup_us: u64,
    pub solve: SolveOptions,
    /// Event trace of the first seed at the first sweep point.
    pub trace: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(base: ScenarioConfig, mode: Mode) -> Self {
        ExperimentSpec {
            base,
            sweep: None,
            mode,
            seeds: (1..=10).collect(),
            sim_time_us: 2_000_000_000,
            warmup_us: 200_000_000,
            solve: SolveOptions::default(),
            trace: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.mode.sim() {
            if self.seeds.is_empty() {
                return Err(HarnessError::InvalidSpec("simulation needs at least one seed".into()));
            }
            if self.warmup_us >= self.sim_time_us {
                return Err(Error::InvalidWindow {
                    warmup_us: self.warmup_us,
                    sim_time_us: self.sim_time_us,
                }
                .into());
            }
        }
        Ok(())
    }

    /// Scenario configs in sweep order.
    pub fn points(&self) -> Result<Vec<ScenarioConfig>> {
        match &self.sweep {
            None => Ok(vec![self.base.clone()]),
            Some(axis) => axis
                .values
                .iter()
                .map(|&v| {
                    let cfg = axis.field.apply(&self.base, v)?;
                    cfg.validate()?;
                    Ok(cfg)
                })
                .collect(),
        }
    }
}

/// Builds a config from a JSON object; absent fields take the defaults.
pub fn config_from_json(overrides: &Value) -> Result<ScenarioConfig> {
    let Value::Object(fields) = overrides else {
        return Err(HarnessError::InvalidSpec("config must be a JSON object".into()));
    };
    let mut merged = serde_json::to_value(ScenarioConfig::default())?;
    let target = merged.as_object_mut().expect("config serializes to an object");
    for (k, v) in fields {
        target.insert(k.clone(), v.clone());
    }
    let cfg: ScenarioConfig = serde_json::from_value(merged)
        .map_err(|e| HarnessError::InvalidSpec(format!("config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &str) -> Result<ScenarioConfig> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| HarnessError::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| HarnessError::InvalidSpec(format!("{path}: {e}")))?;
    config_from_json(&value)
}

fn model_row(cfg: &ScenarioConfig, scn: &Scenario, opts: &SolveOptions) -> Result<ResultRow> {
    match solve_scenario(scn, opts) {
        Ok(sol) => Ok(ResultRow::from_model(&sol)),
        Err(Error::NonConvergence { last, residual, .. }) => {
            log::warn!("model did not converge at N={} (residual {residual:e})", cfg.n_nodes);
            Ok(ResultRow::from_model(&last))
        }
        Err(e) => Err(e.into()),
    }
}

fn sim_runs(spec: &ExperimentSpec, scn: &Scenario, traced: bool) -> Result<Vec<SimStats>> {
    spec.seeds
        .par_iter()
        .enumerate()
        .map(|(k, &seed)| {
            let opts = SimOptions {
                seed,
                sim_time_us: spec.sim_time_us,
                warmup_us: spec.warmup_us,
                audit: false,
            };
            match (&spec.trace, traced && k == 0) {
                (Some(path), true) => {
                    let file = File::create(path).map_err(|e| HarnessError::io(path.display().to_string(), e))?;
                    let mut sink = CsvTrace::new(BufWriter::new(file))
                        .map_err(|e| HarnessError::io(path.display().to_string(), e))?;
                    let stats = simulate(scn, &opts, Some(&mut sink))?;
                    sink.into_inner()
                        .flush()
                        .map_err(|e| HarnessError::io(path.display().to_string(), e))?;
                    Ok(stats)
                }
                _ => Ok(simulate(scn, &opts, None)?),
            }
        })
        .collect()
}

fn run_point(spec: &ExperimentSpec, cfg: ScenarioConfig, first: bool) -> Result<Vec<ResultRow>> {
    let scn = Scenario::new(cfg.clone())?;
    let mut rows = Vec::new();
    if spec.mode.model() {
        rows.push(model_row(&cfg, &scn, &spec.solve)?);
    }
    if spec.mode.sim() {
        let runs = sim_runs(spec, &scn, first)?;
        rows.extend(runs.iter().enumerate().map(|(k, s)| ResultRow::from_sim(&cfg, k, s)));
        if runs.len() >= 2 {
            rows.push(ResultRow::sim_mean(&cfg, &Replication::from_runs(runs)?));
        } else {
            rows.push(ResultRow {
                source: Source::SimMean,
                replication: -1,
                ..rows.last().expect("one sim row").clone()
            });
        }
    }
    Ok(rows)
}

/// Runs every point of `spec`. Rows come out in sweep order, then source,
/// then replication, regardless of scheduling.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let points = spec.points()?;
    let per_point = points
        .into_par_iter()
        .enumerate()
        .map(|(i, cfg)| run_point(spec, cfg, i == 0))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

pub fn write_rows<W: Write>(rows: &[ResultRow], format: Format, out: W) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for row in rows {
                w.serialize(row)?;
            }
            w.flush().map_err(|e| HarnessError::io("output", e))?;
        }
        Format::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out).map_err(|e| HarnessError::io("output", e))?;
        }
    }
    Ok(())
}

pub fn read_rows<R: Read>(format: Format, input: R) -> Result<Vec<ResultRow>> {
    match format {
        Format::Csv => Ok(csv::Reader::from_reader(input).deserialize().collect::<Result<_, _>>()?),
        Format::Json => Ok(serde_json::from_reader(input)?),
    }
}
