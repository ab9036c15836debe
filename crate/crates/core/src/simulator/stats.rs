use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::statistics::Statistics;

use crate::error::{Error, Result};

pub(crate) fn bump(counter: &mut u64, by: u64) -> Result<()> {
    *counter = counter.checked_add(by).ok_or(Error::StatsOverflow)?;
    Ok(())
}

/// Counters of one run. Fields suffixed `_w` cover only the measurement
/// window `[warmup_us, sim_end_us)`; the others cover the whole run and
/// satisfy the conservation law.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub seed: u64,
    pub n_nodes: usize,
    pub warmup_us: u64,
    pub sim_end_us: u64,

    pub total_arrivals: u64,
    pub blocked: u64,
    pub delivered: u64,
    pub discarded: u64,
    pub queued_at_end: u64,

    pub arrivals_w: u64,
    pub blocked_w: u64,
    pub delivered_w: u64,
    pub discarded_w: u64,
    /// Sum over delivered packets of departure minus arrival time.
    pub sum_delay_us_w: u64,
    pub tx_attempts_w: u64,
    pub collided_attempts_w: u64,
    /// Service time of every batch departing in the window, µs.
    pub service_samples: Vec<u64>,
    /// `(sum_us, count)` of service times, indexed by batch size.
    pub service_by_size: Vec<(u64, u64)>,
    /// ∫ Σ_nodes q(t) dt over the window, packet·µs.
    pub queue_area_w: u64,
    /// ∫ #{nodes with q ≥ s_min} dt over the window, µs.
    pub ready_time_w: u64,
}

impl SimStats {
    pub fn window_us(&self) -> u64 {
        self.sim_end_us - self.warmup_us
    }

    fn window_s(&self) -> f64 {
        self.window_us() as f64 * 1e-6
    }

    /// Aggregate delivered packets per second.
    pub fn throughput(&self) -> f64 {
        self.delivered_w as f64 / self.window_s()
    }

    /// Mean time from arrival to acknowledged departure, seconds.
    pub fn delay_s(&self) -> f64 {
        self.sum_delay_us_w as f64 * 1e-6 / self.delivered_w as f64
    }

    pub fn blocking_prob(&self) -> f64 {
        self.blocked_w as f64 / self.arrivals_w as f64
    }

    /// Fraction of transmission attempts that collided.
    pub fn collision_prob(&self) -> f64 {
        self.collided_attempts_w as f64 / self.tx_attempts_w as f64
    }

    /// Time-averaged probability that a node holds at least s_min packets.
    pub fn rho(&self) -> f64 {
        self.ready_time_w as f64 / (self.n_nodes as f64 * self.window_us() as f64)
    }

    /// Time-averaged queue length of one node.
    pub fn mean_queue(&self) -> f64 {
        self.queue_area_w as f64 / (self.n_nodes as f64 * self.window_us() as f64)
    }

    pub fn mean_service_time_us(&self) -> f64 {
        let (sum, n) = self.service_by_size.iter().fold((0u64, 0u64), |(a, b), &(s, c)| (a + s, b + c));
        sum as f64 / n as f64
    }

    pub fn mean_service_time_for(&self, s: usize) -> Option<f64> {
        match self.service_by_size.get(s) {
            Some(&(sum, n)) if n > 0 => Some(sum as f64 / n as f64),
            _ => None,
        }
    }

    /// Packets held in queues at the start of the window.
    pub fn queued_at_warmup(&self) -> u64 {
        (self.total_arrivals - self.arrivals_w) - (self.blocked - self.blocked_w) - (self.delivered - self.delivered_w)
            - (self.discarded - self.discarded_w)
    }

    pub fn is_conserved(&self) -> bool {
        self.total_arrivals == self.delivered + self.blocked + self.discarded + self.queued_at_end
    }
}

/// Sample mean, standard deviation and Student-t 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub stddev: f64,
    pub ci95_halfwidth: f64,
}

impl Aggregate {
    /// Needs at least two samples.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::TooFewSeeds(n));
        }
        let mean = samples.mean();
        let stddev = samples.std_dev();
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.975);
        Ok(Aggregate {
            mean,
            stddev,
            ci95_halfwidth: t * stddev / (n as f64).sqrt(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_matches_hand_computation() {
        let a = Aggregate::from_samples(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((a.mean - 2.5).abs() < 1e-15);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((a.stddev - sd).abs() < 1e-12);
        // t_{0.975, 3} = 3.182446305...
        assert!((a.ci95_halfwidth - 3.182446305284263 * sd / 2.0).abs() < 1e-9);
    }

    #[test]
    fn aggregate_of_identical_samples() {
        let a = Aggregate::from_samples(&[7.0; 5]).unwrap();
        assert_eq!((a.mean, a.stddev, a.ci95_halfwidth), (7.0, 0.0, 0.0));
        assert!(matches!(Aggregate::from_samples(&[1.0]), Err(Error::TooFewSeeds(1))));
    }

    #[test]
    fn overflow_is_an_error() {
        let mut c = u64::MAX - 1;
        bump(&mut c, 1).unwrap();
        assert!(matches!(bump(&mut c, 1), Err(Error::StatsOverflow)));
    }
}
