use aoi_core::{penalty_average, shift_reception, ClockBiasModel, Nanos, PenaltyFunction};

use crate::config::SimConfig;
use crate::queue::simulate_queue;
use crate::Result;

/// Penalty averages of one simulated trace with and without a reception
/// clock offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasOutcome {
    pub unbiased: f64,
    pub biased: f64,
}

impl BiasOutcome {
    pub fn difference(&self) -> f64 {
        self.biased - self.unbiased
    }
}

pub fn bias_experiment(base: &SimConfig, bias: Nanos, f: &PenaltyFunction) -> Result<BiasOutcome> {
    let trace = simulate_queue(base)?.trace;
    let unbiased = penalty_average(&trace, f)?;
    let shifted = shift_reception(&trace, &ClockBiasModel::constant(bias)).trace;
    let biased = penalty_average(&shifted, f)?;
    Ok(BiasOutcome { unbiased, biased })
}
