use thiserror::Error;

use crate::fixed_point::ModelSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario configuration: {0}")]
    InvalidConfig(String),

    #[error("batch size {m} outside 1..={max}")]
    BatchSizeOutOfRange { m: usize, max: usize },

    #[error("linear SNR must be strictly positive, got {0}")]
    NonPositiveSnr(f64),

    #[error("invalid error-chain transition {i} -> {j}")]
    InvalidTransition { i: usize, j: usize },

    #[error("retransmission chain never absorbs: PER({state}) = 1")]
    NoAbsorption { state: usize },

    #[error("collision probability {0} leaves the service time unbounded")]
    SaturationDivergence(f64),

    #[error("Markov chain is reducible or singular")]
    ReducibleChain,

    #[error("chain with {0} states exceeds the dense-solver limit")]
    StateSpaceTooLarge(usize),

    #[error("steady-state mass at K is {0}, upstream distributions are inconsistent")]
    InconsistentSteadyState(f64),

    #[error("zero accepted arrival rate, delay is undefined")]
    NoThroughput,

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        /// Residual per iteration, most recent last (capped at the last 32).
        trace: Vec<f64>,
        last: Box<ModelSolution>,
    },

    #[error("unknown sweep field `{0}`")]
    InvalidSweepField(String),

    #[error("invalid measurement window: warmup {warmup_us} us, end {sim_time_us} us")]
    InvalidWindow { warmup_us: u64, sim_time_us: u64 },

    #[error("statistics counter overflow")]
    StatsOverflow,

    #[error("replication needs at least 2 seeds, got {0}")]
    TooFewSeeds(usize),

    #[error("channel audit failed: {0}")]
    ChannelAudit(String),

    #[error("trace output failed: {0}")]
    Trace(#[from] std::io::Error),
}
