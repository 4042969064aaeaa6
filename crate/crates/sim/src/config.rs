use serde::{Deserialize, Serialize};

use crate::{Result, SimError};
use aoi_core::Nanos;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArrivalProcess {
    /// Exponential inter-arrival times with rate λ (1/s).
    Poisson { rate: f64 },
    /// One arrival every `1/rate` seconds starting at time zero.
    Deterministic { rate: f64 },
}

impl ArrivalProcess {
    pub fn rate(&self) -> f64 {
        match *self {
            ArrivalProcess::Poisson { rate } | ArrivalProcess::Deterministic { rate } => rate,
        }
    }

    /// Same kind of process at a different rate.
    pub fn with_rate(self, rate: f64) -> Self {
        match self {
            ArrivalProcess::Poisson { .. } => ArrivalProcess::Poisson { rate },
            ArrivalProcess::Deterministic { .. } => ArrivalProcess::Deterministic { rate },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ServiceProcess {
    /// Exponential service times with rate μ (1/s).
    Exponential { rate: f64 },
    /// Every service takes exactly `1/rate` seconds.
    Deterministic { rate: f64 },
}

impl ServiceProcess {
    pub fn rate(&self) -> f64 {
        match *self {
            ServiceProcess::Exponential { rate } | ServiceProcess::Deterministic { rate } => rate,
        }
    }
}

/// Queueing discipline. Only FCFS is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Discipline {
    #[default]
    Fcfs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    /// Number of generated arrivals, dropped ones included.
    Events(u64),
    /// Arrivals strictly before this simulated time.
    Duration(Nanos),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub arrival: ArrivalProcess,
    pub service: ServiceProcess,
    /// Waiting room excluding the packet in service; `None` is unbounded.
    pub buffer_capacity: Option<usize>,
    pub discipline: Discipline,
    pub horizon: Horizon,
    pub seed: u64,
    /// Leading fraction of arrivals excluded from the trace.
    pub warmup_fraction: f64,
}

pub const DEFAULT_WARMUP: f64 = 0.05;

impl SimConfig {
    /// M/M/1 with an unbounded buffer.
    pub fn mm1(lambda: f64, mu: f64, events: u64, seed: u64) -> Self {
        Self {
            arrival: ArrivalProcess::Poisson { rate: lambda },
            service: ServiceProcess::Exponential { rate: mu },
            buffer_capacity: None,
            discipline: Discipline::Fcfs,
            horizon: Horizon::Events(events),
            seed,
            warmup_fraction: DEFAULT_WARMUP,
        }
    }

    /// D/D/1 with an unbounded buffer.
    pub fn dd1(lambda: f64, mu: f64, events: u64) -> Self {
        Self {
            arrival: ArrivalProcess::Deterministic { rate: lambda },
            service: ServiceProcess::Deterministic { rate: mu },
            ..Self::mm1(lambda, mu, events, 0)
        }
    }

    /// `ρ = λ/μ`.
    pub fn load(&self) -> f64 {
        self.arrival.rate() / self.service.rate()
    }

    pub fn with_arrival_rate(&self, rate: f64) -> Self {
        Self {
            arrival: self.arrival.with_rate(rate),
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.arrival.rate()) {
            return Err(SimError::InvalidConfig(format!(
                "arrival rate must be positive, got {}",
                self.arrival.rate()
            )));
        }
        if !positive(self.service.rate()) {
            return Err(SimError::InvalidConfig(format!(
                "service rate must be positive, got {}",
                self.service.rate()
            )));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(SimError::InvalidConfig(format!(
                "warm-up fraction must be in [0, 1), got {}",
                self.warmup_fraction
            )));
        }
        match self.horizon {
            Horizon::Events(0) => Err(SimError::InvalidConfig("zero events".into())),
            Horizon::Duration(d) if d <= 0 => {
                Err(SimError::InvalidConfig("non-positive duration".into()))
            }
            _ => Ok(()),
        }
    }
}
