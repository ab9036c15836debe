//! Packet error rate of a spatial stream behind a zero-forcing receiver.
//!
//! With `m` of `M` streams active the post-processing SNR is chi-square with
//! 2(M - m + 1) degrees of freedom, so a packet is lost when that SNR falls
//! under the reference threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy_timing::{snr_db_to_linear, ScenarioConfig};

/// PER(m) for a batch of `m` streams out of `m_antennas`.
///
/// `xi0` and `xi_ref` are linear ratios.
pub fn per(m: usize, m_antennas: usize, xi0: f64, xi_ref: f64) -> Result<f64> {
    if m == 0 || m > m_antennas {
        return Err(Error::BatchSizeOutOfRange { m, max: m_antennas });
    }
    if !(xi0 > 0.0) {
        return Err(Error::NonPositiveSnr(xi0));
    }
    let x = m as f64 / xi0 * xi_ref;
    let n = m_antennas - m;
    if x >= (n + 1) as f64 {
        let mut term = 1.0;
        let mut head = 1.0;
        for k in 1..=n {
            term *= x / k as f64;
            head += term;
        }
        return Ok((1.0 - head * (-x).exp()).clamp(0.0, 1.0));
    }
    // Small x: sum the Poisson tail directly, 1 - head would cancel.
    let mut term = (-x).exp();
    for k in 1..=n + 1 {
        term *= x / k as f64;
    }
    let mut tail = 0.0;
    let mut k = n + 1;
    while term > tail * 1e-17 {
        tail += term;
        k += 1;
        term *= x / k as f64;
    }
    Ok(tail.min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerTable {
    per: Vec<f64>,
    pub snr_linear: f64,
    pub snr_ref_linear: f64,
    pub m_antennas: usize,
}

impl PerTable {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let xi0 = snr_db_to_linear(cfg.snr_db);
        let xi_ref = snr_db_to_linear(cfg.snr_ref_db);
        let per = (1..=cfg.m_antennas)
            .map(|m| per(m, cfg.m_antennas, xi0, xi_ref))
            .collect::<Result<Vec<_>>>()?;
        Ok(PerTable {
            per,
            snr_linear: xi0,
            snr_ref_linear: xi_ref,
            m_antennas: cfg.m_antennas,
        })
    }

    /// A table with explicit error rates, `values[m - 1]` = PER(m).
    ///
    /// Used for controlled experiments (error-free channel, synthetic tables).
    /// The SNR fields are left as NaN.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("empty PER table".into()));
        }
        if let Some(bad) = values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidConfig(format!("PER {bad} outside [0, 1]")));
        }
        Ok(PerTable {
            m_antennas: values.len(),
            per: values,
            snr_linear: f64::NAN,
            snr_ref_linear: f64::NAN,
        })
    }

    pub fn get(&self, m: usize) -> f64 {
        self.per[m - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.per
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Regularised lower incomplete gamma P(n, x) by composite Simpson
    /// integration of the Erlang density. Independent of the series in `per`.
    fn erlang_cdf_quadrature(n: usize, x: f64) -> f64 {
        let log_norm: f64 = (1..n).map(|k| (k as f64).ln()).sum();
        let density = |t: f64| {
            if t == 0.0 {
                return if n == 1 { 1.0 } else { 0.0 };
            }
            ((n as f64 - 1.0) * t.ln() - t - log_norm).exp()
        };
        let steps = 20_000;
        let h = x / steps as f64;
        let mut acc = density(0.0) + density(x);
        for i in 1..steps {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * density(i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn zero_threshold_never_fails() {
        for m_ant in 1..=8 {
            for m in 1..=m_ant {
                assert_eq!(per(m, m_ant, 100.0, 0.0).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn reference_values_at_20db() {
        let xi0 = snr_db_to_linear(20.0);
        let xi_ref = snr_db_to_linear(15.0);
        assert!((per(1, 2, xi0, xi_ref).unwrap() - 0.0406).abs() < 5e-4);
        assert!((per(2, 2, xi0, xi_ref).unwrap() - 0.4687).abs() < 5e-4);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(per(3, 2, 1.0, 1.0), Err(Error::BatchSizeOutOfRange { .. })));
        assert!(matches!(per(0, 2, 1.0, 1.0), Err(Error::BatchSizeOutOfRange { .. })));
        assert!(matches!(per(1, 2, 0.0, 1.0), Err(Error::NonPositiveSnr(_))));
        assert!(matches!(per(1, 2, -3.0, 1.0), Err(Error::NonPositiveSnr(_))));
    }

    #[test]
    fn limits_in_snr() {
        let xi_ref = snr_db_to_linear(15.0);
        let high = snr_db_to_linear(120.0);
        let low = 1e-12;
        for m_ant in 1..=8 {
            for m in 1..=m_ant {
                assert!(per(m, m_ant, high, xi_ref).unwrap() < 1e-6);
                assert!(per(m, m_ant, low, xi_ref).unwrap() > 1.0 - 1e-9);
            }
        }
    }

    #[test]
    fn monotone_in_stream_count() {
        let xi_ref = snr_db_to_linear(15.0);
        for db in [0.0, 10.0, 15.0, 20.0, 30.0, 40.0] {
            let xi0 = snr_db_to_linear(db);
            for m_ant in 1..=8 {
                let col: Vec<f64> = (1..=m_ant).map(|m| per(m, m_ant, xi0, xi_ref).unwrap()).collect();
                assert!(col.windows(2).all(|w| w[0] <= w[1]), "{db} dB, M={m_ant}: {col:?}");
            }
        }
    }

    #[test]
    fn table_from_config() {
        let t = PerTable::new(&ScenarioConfig::default()).unwrap();
        assert_eq!(t.as_slice().len(), 2);
        assert!((t.snr_linear - 100.0).abs() < 1e-9);
        assert!((t.get(2) - 0.4687).abs() < 5e-4);
        assert!(PerTable::from_values(vec![0.1, 1.2]).is_err());
    }

    #[test]
    fn monotone_in_snr_at_high_snr() {
        // The 32.4 dB, M = m = 7 case used to wobble at the ulp level.
        let xi_ref = snr_db_to_linear(15.0);
        for m_ant in 1..=8 {
            for m in 1..=m_ant {
                let col: Vec<f64> =
                    (0..=600).map(|i| per(m, m_ant, snr_db_to_linear(i as f64 / 10.0), xi_ref).unwrap()).collect();
                assert!(col.windows(2).all(|w| w[1] <= w[0]), "m={m} M={m_ant}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10))]
        #[test]
        fn complement_matches_incomplete_gamma_quadrature(
            m_ant in 1usize..=8,
            m_frac in 0.0f64..1.0,
            db in 0.0f64..40.0,
        ) {
            let m = 1 + ((m_ant as f64 * m_frac) as usize).min(m_ant - 1);
            let xi0 = snr_db_to_linear(db);
            let xi_ref = snr_db_to_linear(15.0);
            let x = m as f64 * xi_ref / xi0;
            let expected = erlang_cdf_quadrature(m_ant - m + 1, x);
            let got = per(m, m_ant, xi0, xi_ref).unwrap();
            prop_assert!((got - expected).abs() < 1e-9, "m={m} M={m_ant} x={x}: {got} vs {expected}");
        }
    }
}
