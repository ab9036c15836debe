//! Scenario parameters and every frame duration derived from them.
//!
//! All durations are integer microseconds. Durations that are not integral
//! for a given parameter set are rounded to the nearest microsecond and a
//! warning is logged.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network, traffic, PHY and MAC parameters of one scenario.
///
/// Field names double as the JSON config schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_nodes: usize,
    pub m_antennas: usize,
    pub s_min: usize,
    pub s_max: usize,
    /// Queue capacity K in packets, including packets in service.
    pub buffer_size: usize,
    /// Per-node Poisson arrival rate, packets/second.
    pub arrival_rate: f64,
    pub cw: u32,
    /// Empty backoff slot, µs.
    pub slot_sigma: u64,
    pub difs: u64,
    pub sifs: u64,
    /// MAC header and payload rate, bits/second.
    pub data_rate: f64,
    /// PHY header and training sequence rate, bits/second.
    pub phy_rate: f64,
    pub packet_len: u64,
    pub phy_header_len: u64,
    pub mac_header_len: u64,
    /// Length of one training sequence in bits.
    pub training_seq_len: u64,
    pub snr_db: f64,
    pub snr_ref_db: f64,
    /// Per-batch attempt limit in the simulator. `None` retries forever.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_limit: Option<u32>,
}

impl Default for ScenarioConfig {
    /// The reference parameter set: 500/250 kb/s, 4000-bit packets, CW = 32,
    /// K = 50, ξ_ref = 15 dB, with [M, s_min, s_max] = [2, 1, 2] at 20 dB.
    fn default() -> Self {
        ScenarioConfig {
            n_nodes: 4,
            m_antennas: 2,
            s_min: 1,
            s_max: 2,
            buffer_size: 50,
            arrival_rate: 5.0,
            cw: 32,
            slot_sigma: 20,
            difs: 50,
            sifs: 10,
            data_rate: 500e3,
            phy_rate: 250e3,
            packet_len: 4000,
            phy_header_len: 192,
            mac_header_len: 160,
            training_seq_len: 64,
            snr_db: 20.0,
            snr_ref_db: 15.0,
            retry_limit: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_nodes == 0 {
            return fail("n_nodes must be at least 1".into());
        }
        if self.m_antennas == 0 {
            return fail("m_antennas must be at least 1".into());
        }
        if !(1 <= self.s_min && self.s_min <= self.s_max && self.s_max <= self.m_antennas) {
            return fail(format!(
                "need 1 <= s_min <= s_max <= M, got s_min={} s_max={} M={}",
                self.s_min, self.s_max, self.m_antennas
            ));
        }
        if self.buffer_size == 0 || self.s_max > self.buffer_size {
            return fail(format!(
                "need 1 <= s_max <= K, got s_max={} K={}",
                self.s_max, self.buffer_size
            ));
        }
        if self.cw == 0 {
            return fail("cw must be at least 1".into());
        }
        for (name, v) in [
            ("slot_sigma", self.slot_sigma),
            ("difs", self.difs),
            ("sifs", self.sifs),
            ("packet_len", self.packet_len),
            ("phy_header_len", self.phy_header_len),
            ("mac_header_len", self.mac_header_len),
            ("training_seq_len", self.training_seq_len),
        ] {
            if v == 0 {
                return fail(format!("{name} must be strictly positive"));
            }
        }
        for (name, v) in [
            ("arrival_rate", self.arrival_rate),
            ("data_rate", self.data_rate),
            ("phy_rate", self.phy_rate),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be finite and strictly positive, got {v}"));
            }
        }
        if !self.snr_db.is_finite() || !self.snr_ref_db.is_finite() {
            return fail("SNR values must be finite".into());
        }
        if self.retry_limit == Some(0) {
            return fail("retry_limit must be positive when set".into());
        }
        Ok(())
    }
}

pub fn snr_db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts `bits` sent at `rate` bits/s to µs without rounding.
fn airtime_us(bits: u64, rate: f64) -> f64 {
    bits as f64 * 1e6 / rate
}

fn to_whole_us(what: &str, us: f64) -> u64 {
    let rounded = us.round();
    if (us - rounded).abs() > 1e-6 {
        warn!("{what} = {us} us is not integral, rounded to {rounded} us");
    }
    rounded as u64
}

fn check_batch(m: usize, cfg: &ScenarioConfig) -> Result<()> {
    if m == 0 || m > cfg.m_antennas {
        return Err(Error::BatchSizeOutOfRange {
            m,
            max: cfg.m_antennas,
        });
    }
    Ok(())
}

/// Duration of a space-batch data frame carrying `m` packets.
///
/// A single-stream frame carries no training sequence; an `m`-stream frame
/// carries `m` of them.
pub fn t_data(m: usize, cfg: &ScenarioConfig) -> Result<u64> {
    check_batch(m, cfg)?;
    let training = if m == 1 { 0 } else { m as u64 * cfg.training_seq_len };
    let us = airtime_us(cfg.phy_header_len + training, cfg.phy_rate)
        + airtime_us(cfg.mac_header_len + cfg.packet_len, cfg.data_rate);
    Ok(to_whole_us("T_data", us))
}

pub fn t_ack(cfg: &ScenarioConfig) -> u64 {
    let us = airtime_us(cfg.phy_header_len, cfg.phy_rate) + airtime_us(cfg.mac_header_len, cfg.data_rate);
    to_whole_us("T_ack", us)
}

/// Time every node waits after a data frame: room for M acknowledgements,
/// whatever the batch size actually was.
pub fn ack_timeout(cfg: &ScenarioConfig) -> u64 {
    cfg.m_antennas as u64 * (cfg.sifs + t_ack(cfg))
}

/// Channel busy time of a collision-free transmission of `m` packets.
pub fn t_cf(m: usize, cfg: &ScenarioConfig) -> Result<u64> {
    Ok(t_data(m, cfg)? + ack_timeout(cfg))
}

/// Channel busy time of a collision whose longest batch carries `m_max` packets.
pub fn t_c(m_max: usize, cfg: &ScenarioConfig) -> Result<u64> {
    Ok(t_data(m_max, cfg)? + ack_timeout(cfg))
}

/// Precomputed durations for m = 1..=M. Accessors are 1-based in `m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingTable {
    t_data: Vec<u64>,
    pub t_ack: u64,
    pub ack_timeout: u64,
    t_cf: Vec<u64>,
    t_c: Vec<u64>,
}

impl TimingTable {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let m_range = 1..=cfg.m_antennas;
        let t_data = m_range.clone().map(|m| t_data(m, cfg)).collect::<Result<Vec<_>>>()?;
        let t_cf = m_range.clone().map(|m| t_cf(m, cfg)).collect::<Result<Vec<_>>>()?;
        let t_c = m_range.map(|m| t_c(m, cfg)).collect::<Result<Vec<_>>>()?;
        Ok(TimingTable {
            t_data,
            t_ack: t_ack(cfg),
            ack_timeout: ack_timeout(cfg),
            t_cf,
            t_c,
        })
    }

    pub fn m_antennas(&self) -> usize {
        self.t_data.len()
    }

    pub fn t_data(&self, m: usize) -> u64 {
        self.t_data[m - 1]
    }

    pub fn t_cf(&self, m: usize) -> u64 {
        self.t_cf[m - 1]
    }

    pub fn t_c(&self, m_max: usize) -> u64 {
        self.t_c[m_max - 1]
    }
}
