use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AoiError, Result};
use crate::trace::{EffectiveTrace, Trace};
use crate::to_secs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    /// `f(t) = αt`
    Linear,
    /// `f(t) = e^{αt} − 1`
    Exponential,
    /// `f(t) = ln(αt + 1)`
    Logarithmic,
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PenaltyKind::Linear => "linear",
            PenaltyKind::Exponential => "exp",
            PenaltyKind::Logarithmic => "log",
        })
    }
}

impl FromStr for PenaltyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" | "lin" => Ok(PenaltyKind::Linear),
            "exp" | "exponential" => Ok(PenaltyKind::Exponential),
            "log" | "logarithmic" => Ok(PenaltyKind::Logarithmic),
            other => Err(format!("unknown penalty '{other}', expected linear|exp|log")),
        }
    }
}

/// Age penalty `f` with its antiderivative `F(x) = ∫₀ˣ f`, both taking age
/// in seconds. `α` has units of 1/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyFunction {
    kind: PenaltyKind,
    alpha: f64,
}

impl PenaltyFunction {
    pub fn new(kind: PenaltyKind, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(AoiError::InvalidAlpha(alpha));
        }
        Ok(Self { kind, alpha })
    }

    pub fn linear(alpha: f64) -> Result<Self> {
        Self::new(PenaltyKind::Linear, alpha)
    }

    pub fn exponential(alpha: f64) -> Result<Self> {
        Self::new(PenaltyKind::Exponential, alpha)
    }

    pub fn logarithmic(alpha: f64) -> Result<Self> {
        Self::new(PenaltyKind::Logarithmic, alpha)
    }

    /// Plain age, `f(t) = t`.
    pub fn identity() -> Self {
        Self {
            kind: PenaltyKind::Linear,
            alpha: 1.0,
        }
    }

    pub fn kind(&self) -> PenaltyKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// True when `x` lies in the domain of `f` and `F`.
    pub fn in_domain(&self, x: f64) -> bool {
        match self.kind {
            PenaltyKind::Logarithmic => self.alpha * x + 1.0 > 0.0,
            _ => x.is_finite(),
        }
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        if !self.in_domain(x) {
            return Err(AoiError::PenaltyDomain(x));
        }
        let a = self.alpha;
        let v = match self.kind {
            PenaltyKind::Linear => a * x,
            PenaltyKind::Exponential => (a * x).exp_m1(),
            PenaltyKind::Logarithmic => (a * x).ln_1p(),
        };
        finite(v)
    }

    /// Closed-form antiderivative with `F(0) = 0`.
    pub fn antiderivative(&self, x: f64) -> Result<f64> {
        if !self.in_domain(x) {
            return Err(AoiError::PenaltyDomain(x));
        }
        let a = self.alpha;
        let ax = a * x;
        let v = match self.kind {
            PenaltyKind::Linear => 0.5 * a * x * x,
            // (e^{ax} − 1)/a − x
            PenaltyKind::Exponential => (ax.exp_m1() - ax) / a,
            // ((ax + 1) ln(ax + 1))/a − x
            PenaltyKind::Logarithmic => ((1.0 + ax) * ax.ln_1p() - ax) / a,
        };
        finite(v)
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(AoiError::NonFinite)
    }
}

/// Time-average penalty on `[r_0, r_N]`:
/// `(1/T) Σ [F(r_i − s_{i−1}) − F(r_{i−1} − s_{i−1})]`.
pub fn penalty_average(trace: &Trace, f: &PenaltyFunction) -> Result<f64> {
    penalty_of_effective(&trace.effective(), f)
}

pub(crate) fn penalty_of_effective(eff: &EffectiveTrace, f: &PenaltyFunction) -> Result<f64> {
    if eff.is_empty() {
        return Err(AoiError::NoEffectiveUpdates);
    }
    let horizon = eff.horizon();
    if horizon <= 0 {
        return Err(AoiError::NonPositiveHorizon(horizon));
    }
    let mut sum = 0.0;
    for iv in eff.intervals() {
        sum += f.antiderivative(to_secs(iv.theta()))? - f.antiderivative(to_secs(iv.beta()))?;
    }
    finite(sum / to_secs(horizon))
}
