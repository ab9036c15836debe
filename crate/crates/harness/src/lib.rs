//! Experiment runner for the spacebatch model and simulator: parameter
//! sweeps, result tables and model-vs-simulation reports.

pub mod compare;
pub mod error;
pub mod experiment;
pub mod presets;

pub use compare::{compare, Bias, CompareReport, PointComparison, Tolerances};
pub use error::{HarnessError, Result};
pub use experiment::{
    config_from_json, load_config, read_rows, run_experiment, write_rows, ExperimentSpec, Format, Mode, ResultRow,
    Source,
};
