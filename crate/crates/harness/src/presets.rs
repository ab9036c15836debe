//! Bundled experiment grids, stored as JSON under `presets/`.

use serde::Deserialize;
use serde_json::Value;
use spacebatch_core::SweepAxis;

use crate::error::{HarnessError, Result};
use crate::experiment::{config_from_json, ExperimentSpec, Mode};

const SOURCES: [&str; 3] = [
    include_str!("../presets/antenna_sweep.json"),
    include_str!("../presets/agreement_grid.json"),
    include_str!("../presets/min_batch.json"),
];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetRun {
    pub label: String,
    /// Overrides applied to the default scenario.
    pub config: Value,
    pub sweep: SweepAxis,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub runs: Vec<PresetRun>,
}

impl Preset {
    /// One experiment per run, each with the given mode and defaults for the
    /// simulation window and seeds.
    pub fn specs(&self, mode: Mode) -> Result<Vec<ExperimentSpec>> {
        self.runs
            .iter()
            .map(|run| {
                let mut spec = ExperimentSpec::new(config_from_json(&run.config)?, mode);
                spec.sweep = Some(run.sweep.clone());
                Ok(spec)
            })
            .collect()
    }
}

pub fn all() -> Vec<Preset> {
    SOURCES
        .iter()
        .map(|s| serde_json::from_str(s).expect("bundled preset parses"))
        .collect()
}

pub fn get(name: &str) -> Result<Preset> {
    all()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| HarnessError::UnknownPreset(name.to_string()))
}
