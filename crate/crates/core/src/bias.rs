use serde::{Deserialize, Serialize};

use crate::error::{AoiError, Result};
use crate::penalty::{penalty_of_effective, PenaltyFunction, PenaltyKind};
use crate::trace::{EffectiveTrace, Trace};
use crate::{to_secs, Nanos};

/// Constant receiver-minus-transmitter clock offset `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClockBiasModel {
    pub bias: Nanos,
    /// Bound on `|B − B̂|` when the model was estimated; zero if `B` is exact.
    pub rtt_bound: Nanos,
    pub probe_count: usize,
}

impl ClockBiasModel {
    pub fn constant(bias: Nanos) -> Self {
        Self {
            bias,
            rtt_bound: 0,
            probe_count: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedTrace {
    pub trace: Trace,
    /// Set when some shifted delay `r_i + B − s_i` is negative.
    pub negative_delay: bool,
}

/// `r_i' = r_i + B` for every record and for the observation window.
/// Generation times (including the initial state's) are untouched.
pub fn shift_reception(trace: &Trace, model: &ClockBiasModel) -> ShiftedTrace {
    let shifted = trace.shifted(model.bias);
    let negative_delay = shifted.records().iter().any(|r| r.delay() < 0);
    ShiftedTrace {
        trace: shifted,
        negative_delay,
    }
}

fn map_domain(err: AoiError) -> AoiError {
    match err {
        AoiError::PenaltyDomain(_) => AoiError::BiasOutsideDomain,
        other => other,
    }
}

/// Penalty bias from a reception-clock offset, evaluated as the difference
/// of the shifted and unshifted penalty averages.
pub fn sync_bias_direct(trace: &Trace, f: &PenaltyFunction, bias: Nanos) -> Result<f64> {
    let eff = trace.effective();
    direct_on_effective(&eff, f, bias)
}

fn direct_on_effective(eff: &EffectiveTrace, f: &PenaltyFunction, bias: Nanos) -> Result<f64> {
    let unbiased = penalty_of_effective(eff, f)?;
    let biased = penalty_of_effective(&eff.shifted(bias), f).map_err(map_domain)?;
    Ok(biased - unbiased)
}

/// Penalty bias from the per-kind closed forms: `αB` for linear, and the
/// per-interval `(β_i, θ_i)` expressions for exponential and logarithmic
/// penalties normalised by `Σ (r_i − r_{i−1})`.
pub fn sync_bias_closed_form(trace: &Trace, f: &PenaltyFunction, bias: Nanos) -> Result<f64> {
    let eff = trace.effective();
    if eff.is_empty() {
        return Err(AoiError::NoEffectiveUpdates);
    }
    let horizon = eff.horizon();
    if horizon <= 0 {
        return Err(AoiError::NonPositiveHorizon(horizon));
    }
    let a = f.alpha();
    let b = to_secs(bias);
    if f.kind() == PenaltyKind::Linear {
        return Ok(a * b);
    }

    let mut sum = 0.0;
    let mut spacing = 0.0;
    for iv in eff.intervals() {
        let beta = to_secs(iv.beta());
        let theta = to_secs(iv.theta());
        spacing += to_secs(iv.inter_departure());
        sum += match f.kind() {
            // e^{α(θ+B)} − e^{α(β+B)} − e^{αθ} + e^{αβ}
            //   = (e^{αB} − 1) · e^{αβ} · (e^{α(θ−β)} − 1)
            PenaltyKind::Exponential => {
                (a * b).exp_m1() * (a * beta).exp() * (a * (theta - beta)).exp_m1()
            }
            PenaltyKind::Logarithmic => {
                if a * (b + beta) + 1.0 <= 0.0 || a * (b + theta) + 1.0 <= 0.0 {
                    return Err(AoiError::BiasOutsideDomain);
                }
                let l = |x: f64| (a * x).ln_1p();
                // Grouped so that each bracket vanishes at B = 0.
                ((l(b + theta) - l(theta)) - (l(b + beta) - l(beta))) / a
                    + ((b + theta) * l(b + theta) - theta * l(theta))
                    - ((b + beta) * l(b + beta) - beta * l(beta))
            }
            PenaltyKind::Linear => unreachable!(),
        };
    }
    let norm = match f.kind() {
        PenaltyKind::Exponential => a * spacing,
        _ => spacing,
    };
    let v = sum / norm;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(AoiError::NonFinite)
    }
}
