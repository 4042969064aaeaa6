//! Age of Information (AoI) computation on status-update traces.
//!
//! A [`Trace`] holds generation/reception timestamps of status updates in
//! integer nanoseconds. Everything downstream runs on the
//! [`EffectiveTrace`], which drops updates that arrive after a fresher one
//! has already been received. From it we get the age sawtooth
//! ([`AgeSamplePath`]), time-average age by three independent routes,
//! average peak age, age-penalty averages, and the age bias caused by a
//! constant clock offset between transmitter and receiver.
//!
//! Times are carried as [`Nanos`]; statistics are reported in seconds.

mod average;
mod bias;
mod error;
pub mod io;
mod path;
mod penalty;
mod stats;
mod trace;

pub use average::{
    area_decomposition, peak_average_age, time_average_age, AreaDecomposition, AverageMethod,
};
pub use bias::{
    shift_reception, sync_bias_closed_form, sync_bias_direct, ClockBiasModel, ShiftedTrace,
};
pub use error::{AoiError, Result};
pub use path::{sample_path, AgeSamplePath, Breakpoint};
pub use penalty::{penalty_average, PenaltyFunction, PenaltyKind};
pub use stats::{compute_statistics, compute_statistics_with, AgeStatistics, LossRuns};
pub use trace::{effective_trace, EffectiveTrace, Interval, Trace, TraceMeta, UpdateRecord};

/// Signed nanoseconds. Used for both instants and durations.
pub type Nanos = i64;

pub const NANOS_PER_SEC: f64 = 1e9;

#[inline]
pub fn to_secs(ns: Nanos) -> f64 {
    ns as f64 / NANOS_PER_SEC
}

#[inline]
pub fn from_secs(secs: f64) -> Nanos {
    (secs * NANOS_PER_SEC).round() as Nanos
}
