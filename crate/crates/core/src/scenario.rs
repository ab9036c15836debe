use crate::channel_model::PerTable;
use crate::error::{Error, Result};
use crate::phy_timing::{ScenarioConfig, TimingTable};

/// A validated configuration with its timing and PER tables precomputed.
///
/// Shared read-only by the analytical model and the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub timing: TimingTable,
    pub per: PerTable,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let timing = TimingTable::new(&config)?;
        let per = PerTable::new(&config)?;
        Ok(Scenario { config, timing, per })
    }

    /// Replaces the SNR-derived error rates, e.g. with an error-free channel.
    pub fn with_per(mut self, per: PerTable) -> Result<Self> {
        if per.m_antennas != self.config.m_antennas {
            return Err(Error::InvalidConfig(format!(
                "PER table covers {} streams, scenario has M = {}",
                per.m_antennas, self.config.m_antennas
            )));
        }
        self.per = per;
        Ok(self)
    }
}
