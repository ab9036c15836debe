//! Analytical model and discrete-event simulator for single-hop CSMA/CA
//! networks whose nodes send up to M packets at once over M antennas.
//!
//! The model chains [`phy_timing`] → [`channel_model`] → [`retx_chains`] →
//! [`service_model`] ⇄ [`queue_model`], closed by [`fixed_point`]. The
//! [`simulator`] plays the same protocol out event by event.

pub mod channel_model;
pub mod error;
pub mod fixed_point;
pub mod linalg;
pub mod phy_timing;
pub mod queue_model;
pub mod retx_chains;
pub mod scenario;
pub mod service_model;
pub mod simulator;

pub use error::{Error, Result};
pub use fixed_point::{solve, solve_scenario, sweep, ModelSolution, SolveOptions, SweepAxis, SweepField};
pub use phy_timing::{ScenarioConfig, TimingTable};
pub use scenario::Scenario;
pub use channel_model::PerTable;
