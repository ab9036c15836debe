//! Retransmission chains over the number of unacknowledged packets.
//!
//! The absorbing error chain gives the expected number of collision-free
//! attempts needed to clear a batch; the same chain with absorption
//! redirected back to the full batch gives the long-run mix of attempt sizes.

use nalgebra::DMatrix;

use crate::channel_model::PerTable;
use crate::error::{Error, Result};
use crate::linalg::stationary_distribution;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Probability that an attempt with `i` outstanding packets leaves `j`
/// of them unacknowledged.
pub fn error_transition_prob(i: usize, j: usize, per: &PerTable) -> Result<f64> {
    if j > i {
        return Err(Error::InvalidTransition { i, j });
    }
    if i == 0 {
        return Ok(1.0);
    }
    let e = per.get(i);
    Ok(binomial(i, i - j) * (1.0 - e).powi((i - j) as i32) * e.powi(j as i32))
}

/// Absorbing chain on states 0..=s, state 0 absorbing.
#[derive(Debug, Clone)]
pub struct ErrorChain {
    pub s: usize,
    pub p_hat: DMatrix<f64>,
    /// Transient block over states 1..=s.
    pub q_block: DMatrix<f64>,
    /// (I - Q)^{-1}; entry (i-1, j-1) is the expected number of visits to j from i.
    pub fundamental: DMatrix<f64>,
}

impl ErrorChain {
    pub fn new(s: usize, per: &PerTable) -> Result<Self> {
        if s == 0 || s > per.m_antennas {
            return Err(Error::BatchSizeOutOfRange {
                m: s,
                max: per.m_antennas,
            });
        }
        let mut p_hat = DMatrix::<f64>::zeros(s + 1, s + 1);
        for i in 0..=s {
            for j in 0..=i {
                p_hat[(i, j)] = error_transition_prob(i, j, per)?;
            }
        }
        // Q is lower triangular with diagonal PER(i)^i, so I - Q is singular
        // exactly when some PER(i) = 1.
        if let Some(state) = (1..=s).find(|&i| per.get(i) >= 1.0) {
            return Err(Error::NoAbsorption { state });
        }
        let q_block = p_hat.view((1, 1), (s, s)).into_owned();
        let fundamental = (DMatrix::<f64>::identity(s, s) - &q_block)
            .lu()
            .try_inverse()
            .ok_or(Error::NoAbsorption { state: s })?;
        Ok(ErrorChain {
            s,
            p_hat,
            q_block,
            fundamental,
        })
    }

    /// Υ_cf(i) for i = 1..=s: expected steps to absorption, `N·1`.
    pub fn expected_steps(&self) -> Vec<f64> {
        self.fundamental.row_iter().map(|row| row.sum()).collect()
    }
}

/// Υ_cf(i), i = 1..=s. Solving once for s = M covers every smaller batch,
/// since the chain from state i never visits states above i.
pub fn expected_cf_attempts(s: usize, per: &PerTable) -> Result<Vec<f64>> {
    Ok(ErrorChain::new(s, per)?.expected_steps())
}

/// Υ_c, the mean number of attempts per collision-free attempt.
pub fn expected_attempts_per_cf(p: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::SaturationDivergence(p));
    }
    Ok(1.0 / (1.0 - p))
}

/// Recurrent chain on states 1..=s: a cleared batch restarts at s.
#[derive(Debug, Clone)]
pub struct AttemptSizeChain {
    pub s: usize,
    pub p_tilde: DMatrix<f64>,
    /// p_{m|s} at index m - 1.
    pub stationary: Vec<f64>,
}

impl AttemptSizeChain {
    pub fn new(s: usize, per: &PerTable) -> Result<Self> {
        if s == 0 || s > per.m_antennas {
            return Err(Error::BatchSizeOutOfRange {
                m: s,
                max: per.m_antennas,
            });
        }
        let mut p_tilde = DMatrix::<f64>::zeros(s, s);
        for i in 1..=s {
            for j in 1..=i {
                p_tilde[(i - 1, j - 1)] = error_transition_prob(i, j, per)?;
            }
            p_tilde[(i - 1, s - 1)] += error_transition_prob(i, 0, per)?;
        }
        let stationary = stationary_distribution(&p_tilde)?;
        Ok(AttemptSizeChain {
            s,
            p_tilde,
            stationary,
        })
    }
}

pub fn attempt_size_distribution(s: usize, per: &PerTable) -> Result<Vec<f64>> {
    Ok(AttemptSizeChain::new(s, per)?.stationary)
}

/// Everything the service model needs from the error process, for s = 1..=M.
///
/// Depends on the PER table only, so the fixed point builds it once.
#[derive(Debug, Clone)]
pub struct RetxTables {
    /// Υ_cf(s) at index s - 1.
    pub upsilon_cf: Vec<f64>,
    /// p_{m|s} at `attempt_sizes[s - 1][m - 1]`.
    pub attempt_sizes: Vec<Vec<f64>>,
}

impl RetxTables {
    pub fn new(per: &PerTable) -> Result<Self> {
        let m = per.m_antennas;
        Ok(RetxTables {
            upsilon_cf: expected_cf_attempts(m, per)?,
            attempt_sizes: (1..=m)
                .map(|s| attempt_size_distribution(s, per))
                .collect::<Result<_>>()?,
        })
    }

    pub fn upsilon_cf(&self, s: usize) -> f64 {
        self.upsilon_cf[s - 1]
    }

    pub fn attempt_sizes(&self, s: usize) -> &[f64] {
        &self.attempt_sizes[s - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::stationary_residual;
    use crate::phy_timing::snr_db_to_linear;
    use proptest::prelude::*;

    fn table(values: &[f64]) -> PerTable {
        PerTable::from_values(values.to_vec()).unwrap()
    }

    fn reference_20db() -> PerTable {
        let xi0 = snr_db_to_linear(20.0);
        let xr = snr_db_to_linear(15.0);
        table(&[
            crate::channel_model::per(1, 2, xi0, xr).unwrap(),
            crate::channel_model::per(2, 2, xi0, xr).unwrap(),
        ])
    }

    #[test]
    fn error_free_row_absorbs_immediately() {
        let per = table(&[0.0, 0.0, 0.0]);
        for i in 1..=3 {
            assert_eq!(error_transition_prob(i, 0, &per).unwrap(), 1.0);
            for j in 1..=i {
                assert_eq!(error_transition_prob(i, j, &per).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn single_packet_row() {
        let per = table(&[0.5]);
        assert_eq!(error_transition_prob(1, 1, &per).unwrap(), 0.5);
        assert_eq!(error_transition_prob(1, 0, &per).unwrap(), 0.5);
        assert!(matches!(
            error_transition_prob(1, 2, &per),
            Err(Error::InvalidTransition { i: 1, j: 2 })
        ));
    }

    #[test]
    fn two_packet_row_at_20db() {
        let per = reference_20db();
        let p22 = error_transition_prob(2, 2, &per).unwrap();
        let p21 = error_transition_prob(2, 1, &per).unwrap();
        let p20 = error_transition_prob(2, 0, &per).unwrap();
        assert!((p22 - 0.2197).abs() < 1e-3);
        assert!((p21 - 0.4980).abs() < 1e-3);
        assert!((p20 - 0.2823).abs() < 1e-3);
    }

    #[test]
    fn chain_structure() {
        let per = table(&[0.1, 0.3, 0.5, 0.6]);
        let chain = ErrorChain::new(4, &per).unwrap();
        for i in 0..=4 {
            let row: f64 = chain.p_hat.row(i).sum();
            assert!((row - 1.0).abs() < 1e-12);
            for j in (i + 1)..=4 {
                assert_eq!(chain.p_hat[(i, j)], 0.0);
            }
        }
        assert_eq!(chain.p_hat[(0, 0)], 1.0);
    }

    #[test]
    fn expected_attempts_closed_forms() {
        assert_eq!(expected_cf_attempts(3, &table(&[0.0, 0.0, 0.0])).unwrap(), vec![1.0; 3]);
        let single = expected_cf_attempts(1, &table(&[0.5])).unwrap();
        assert!((single[0] - 2.0).abs() < 1e-12);

        // First-step equations for s = 2 solved by hand.
        let per = reference_20db();
        let (e1, e2) = (per.get(1), per.get(2));
        let u1 = 1.0 / (1.0 - e1);
        let u2 = (1.0 + 2.0 * e2 * (1.0 - e2) * u1) / (1.0 - e2 * e2);
        let got = expected_cf_attempts(2, &per).unwrap();
        assert!((got[0] - u1).abs() < 1e-12);
        assert!((got[1] - u2).abs() < 1e-12);
    }

    #[test]
    fn certain_error_never_absorbs() {
        assert!(matches!(
            expected_cf_attempts(2, &table(&[0.2, 1.0])),
            Err(Error::NoAbsorption { state: 2 })
        ));
    }

    #[test]
    fn geometric_attempts_per_cf() {
        assert_eq!(expected_attempts_per_cf(0.0).unwrap(), 1.0);
        assert_eq!(expected_attempts_per_cf(0.5).unwrap(), 2.0);
        assert!((expected_attempts_per_cf(0.2).unwrap() - 1.25).abs() < 1e-15);
        assert!(matches!(expected_attempts_per_cf(1.0), Err(Error::SaturationDivergence(_))));
    }

    #[test]
    fn attempt_size_edge_cases() {
        assert_eq!(attempt_size_distribution(1, &table(&[0.3])).unwrap(), vec![1.0]);
        let dist = attempt_size_distribution(3, &table(&[0.0; 3])).unwrap();
        assert!(dist[0].abs() < 1e-15 && dist[1].abs() < 1e-15);
        assert!((dist[2] - 1.0).abs() < 1e-15);
    }

    fn per_grid() -> impl Strategy<Value = Vec<f64>> {
        (1usize..=8).prop_flat_map(|m| {
            proptest::collection::vec(0.0f64..0.95, m).prop_map(|mut v| {
                v.sort_by(f64::total_cmp);
                v
            })
        })
    }

    proptest! {
        #[test]
        fn cf_attempts_at_least_one_and_nondecreasing(values in per_grid()) {
            let per = table(&values);
            let u = expected_cf_attempts(values.len(), &per).unwrap();
            prop_assert!(u[0] >= 1.0);
            prop_assert!(u.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{u:?}");
        }

        #[test]
        fn attempt_chain_is_stochastic_and_stationary(values in per_grid()) {
            let per = table(&values);
            for s in 1..=values.len() {
                let chain = AttemptSizeChain::new(s, &per).unwrap();
                for i in 0..s {
                    prop_assert!((chain.p_tilde.row(i).sum() - 1.0).abs() < 1e-12);
                }
                prop_assert!((chain.stationary.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(stationary_residual(&chain.p_tilde, &chain.stationary) < 1e-10);
            }
        }

        /// Renewal-reward: the mean number of attempts between fresh batches
        /// in the recurrent chain equals the absorption time of the error chain.
        #[test]
        fn renewal_cycle_matches_absorption_time(values in per_grid()) {
            let per = table(&values);
            let u = expected_cf_attempts(values.len(), &per).unwrap();
            for s in 1..=values.len() {
                let pi = attempt_size_distribution(s, &per).unwrap();
                let renewal_rate: f64 = (1..=s)
                    .map(|i| pi[i - 1] * error_transition_prob(i, 0, &per).unwrap())
                    .sum();
                let cycle = 1.0 / renewal_rate;
                prop_assert!((cycle - u[s - 1]).abs() < 1e-9 * u[s - 1].max(1.0), "s={s}: {cycle} vs {}", u[s - 1]);
            }
        }
    }
}
