//! Discrete-event single-server queue simulator.
//!
//! Packets are generated by an arrival process, wait in a FCFS buffer and
//! are served one at a time. The output is an [`aoi_core::Trace`] with
//! generation time = arrival instant and reception time = departure
//! instant, so every age statistic from `aoi-core` applies directly.
//!
//! Simulated time is integer nanoseconds; rates are per second.

mod config;
mod experiment;
mod queue;
mod rng;
mod sweep;

pub use config::{ArrivalProcess, Discipline, Horizon, ServiceProcess, SimConfig};
pub use experiment::{bias_experiment, BiasOutcome};
pub use queue::{simulate_queue, ServiceRecord, SimOutcome};
pub use rng::{run_seed, SimRng};
pub use sweep::{load_sweep, write_sweep_csv, SweepPoint, SweepResult, SWEEP_HEADER};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("sweep needs at least one rate")]
    EmptyRates,
    #[error(transparent)]
    Age(#[from] aoi_core::AoiError),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
