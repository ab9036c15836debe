use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::info;

use spacebatch_core::{ScenarioConfig, SweepAxis, SweepField};
use spacebatch_harness::{
    compare, load_config, presets, run_experiment, write_rows, ExperimentSpec, Format, HarnessError, Mode, Result,
    ResultRow, Tolerances,
};

/// Analytical model and simulation of multi-packet CSMA/CA networks.
#[derive(Debug, Parser)]
#[command(name = "spacebatch", version)]
struct Cli {
    /// Scenario JSON; absent fields take the reference defaults.
    #[arg(long, conflicts_with = "preset")]
    config: Option<String>,

    /// Bundled experiment grid (see --list-presets).
    #[arg(long)]
    preset: Option<String>,

    #[arg(long, value_enum, default_value = "model")]
    mode: Mode,

    /// FIELD=V1,V2,... with FIELD one of n_nodes, arrival_rate, m_antennas, s_min, s_max, snr_db.
    #[arg(long, value_parser = parse_sweep)]
    sweep: Option<SweepAxis>,

    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
    seeds: Vec<u64>,

    #[arg(long, default_value_t = 2000.0)]
    sim_time_s: f64,

    /// Defaults to 10% of --sim-time-s.
    #[arg(long)]
    warmup_s: Option<f64>,

    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "csv")]
    format: Format,

    /// Channel event trace of the first seed at the first point.
    #[arg(long)]
    trace: Option<PathBuf>,

    /// Exit with status 3 if any model point fails to converge.
    #[arg(long)]
    strict: bool,

    /// Iteration budget of the model's fixed-point solve.
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,

    /// Write the model-vs-simulation report as JSON (mode both).
    #[arg(long)]
    report: Option<PathBuf>,

    #[arg(long)]
    list_presets: bool,
}

fn parse_sweep(s: &str) -> std::result::Result<SweepAxis, String> {
    let (field, values) = s.split_once('=').ok_or("expected FIELD=V1,V2,...")?;
    let field: SweepField = field.trim().parse().map_err(|e: spacebatch_core::Error| e.to_string())?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err("empty sweep".into());
    }
    Ok(SweepAxis { field, values })
}

fn seconds_to_us(s: f64, what: &str) -> Result<u64> {
    if !(s.is_finite() && s >= 0.0) {
        return Err(HarnessError::InvalidSpec(format!("{what} must be a non-negative number of seconds")));
    }
    Ok((s * 1e6).round() as u64)
}

fn build_specs(cli: &Cli) -> Result<Vec<ExperimentSpec>> {
    let mut specs = match (&cli.preset, &cli.config) {
        (Some(name), _) => presets::get(name)?.specs(cli.mode)?,
        (None, Some(path)) => vec![ExperimentSpec::new(load_config(path)?, cli.mode)],
        (None, None) => vec![ExperimentSpec::new(ScenarioConfig::default(), cli.mode)],
    };
    let sim_time_us = seconds_to_us(cli.sim_time_s, "--sim-time-s")?;
    let warmup_us = match cli.warmup_s {
        Some(w) => seconds_to_us(w, "--warmup-s")?,
        None => sim_time_us / 10,
    };
    for (i, spec) in specs.iter_mut().enumerate() {
        if let Some(axis) = &cli.sweep {
            spec.sweep = Some(axis.clone());
        }
        spec.seeds = cli.seeds.clone();
        spec.sim_time_us = sim_time_us;
        spec.warmup_us = warmup_us;
        spec.trace = if i == 0 { cli.trace.clone() } else { None };
        spec.solve.max_iters = cli.max_iters.max(1);
        spec.validate()?;
    }
    Ok(specs)
}

fn write_output(cli: &Cli, rows: &[ResultRow]) -> Result<()> {
    match &cli.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| HarnessError::io(path.display().to_string(), e))?;
            let mut w = BufWriter::new(file);
            write_rows(rows, cli.format, &mut w)?;
            w.flush().map_err(|e| HarnessError::io(path.display().to_string(), e))
        }
        None => write_rows(rows, cli.format, io::stdout().lock()),
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    if cli.list_presets {
        for p in presets::all() {
            println!("{:<14} {}", p.name, p.description);
        }
        return Ok(ExitCode::SUCCESS);
    }
    let specs = build_specs(cli)?;
    let mut rows = Vec::new();
    for spec in &specs {
        info!("running {} point(s) in {:?} mode", spec.points()?.len(), spec.mode);
        rows.extend(run_experiment(spec)?);
    }
    write_output(cli, &rows)?;

    let mut status = ExitCode::SUCCESS;
    if cli.mode == Mode::Both {
        let report = compare(&rows, Tolerances::default())?;
        eprint!("{report}");
        if let Some(path) = &cli.report {
            let file = File::create(path).map_err(|e| HarnessError::io(path.display().to_string(), e))?;
            serde_json::to_writer_pretty(file, &report)?;
        }
        if report.hard_failure {
            status = ExitCode::from(4);
        }
    }
    let unconverged = rows.iter().filter(|r| !r.converged).count();
    if unconverged > 0 {
        log::warn!("{unconverged} model point(s) did not converge");
        if cli.strict {
            return Ok(ExitCode::from(3));
        }
    }
    Ok(status)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
