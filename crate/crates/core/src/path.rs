use serde::{Deserialize, Serialize};

use crate::trace::{EffectiveTrace, Trace};
use crate::{to_secs, Nanos};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub t: Nanos,
    pub age: Nanos,
}

/// Piecewise-linear age sawtooth `Δ(t) = t - U(t)`.
///
/// Consecutive breakpoints with distinct times are joined by slope +1
/// segments; two breakpoints at the same time encode a downward jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeSamplePath {
    breakpoints: Vec<Breakpoint>,
}

/// Sample path of the effective trace over its observation window.
pub fn sample_path(trace: &Trace) -> AgeSamplePath {
    AgeSamplePath::from_effective(&trace.effective())
}

impl AgeSamplePath {
    pub fn from_effective(eff: &EffectiveTrace) -> Self {
        let trace = eff.trace();
        let mut newest_gen = trace.initial_gen_time();
        let mut breakpoints = Vec::with_capacity(2 * eff.len() + 2);
        breakpoints.push(Breakpoint {
            t: trace.observe_start(),
            age: trace.initial_age(),
        });
        for r in eff.records() {
            breakpoints.push(Breakpoint {
                t: r.recv_time,
                age: r.recv_time - newest_gen,
            });
            breakpoints.push(Breakpoint {
                t: r.recv_time,
                age: r.delay(),
            });
            newest_gen = r.gen_time;
        }
        breakpoints.push(Breakpoint {
            t: trace.observe_end(),
            age: trace.observe_end() - newest_gen,
        });
        // drop zero-width no-op pairs (e.g. a reception exactly at the start)
        breakpoints.dedup();
        Self { breakpoints }
    }

    pub fn breakpoints(&self) -> &[Breakpoint] {
        &self.breakpoints
    }

    pub fn start(&self) -> Nanos {
        self.breakpoints[0].t
    }

    pub fn end(&self) -> Nanos {
        self.breakpoints[self.breakpoints.len() - 1].t
    }

    pub fn max_age(&self) -> Nanos {
        self.breakpoints.iter().map(|b| b.age).max().unwrap_or(0)
    }

    /// Age at `t`, right-continuous at jumps.
    pub fn age_at(&self, t: Nanos) -> Option<Nanos> {
        if t < self.start() || t > self.end() {
            return None;
        }
        let idx = self.breakpoints.partition_point(|b| b.t <= t) - 1;
        let b = self.breakpoints[idx];
        Some(b.age + (t - b.t))
    }

    /// Exact area under the path on `[from, to]` in seconds², by trapezoids.
    pub fn area_between(&self, from: Nanos, to: Nanos) -> f64 {
        let from = from.max(self.start());
        let to = to.min(self.end());
        if to <= from {
            return 0.0;
        }
        self.breakpoints
            .windows(2)
            .filter(|w| w[1].t > w[0].t)
            .map(|w| {
                let a = w[0].t.max(from);
                let b = w[1].t.min(to);
                if b <= a {
                    return 0.0;
                }
                let age_a = w[0].age + (a - w[0].t);
                let age_b = w[0].age + (b - w[0].t);
                0.5 * (to_secs(age_a) + to_secs(age_b)) * to_secs(b - a)
            })
            .sum()
    }

    /// Integral of the whole path divided by its length, in seconds.
    pub fn average(&self) -> Option<f64> {
        let len = self.end() - self.start();
        (len > 0).then(|| self.area_between(self.start(), self.end()) / to_secs(len))
    }
}
