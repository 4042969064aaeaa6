//! Clock-offset estimation from probe round trips.
//!
//! For probe `k` the prober stamps `t_s` on its own clock, the reflector
//! stamps `t_r` on its clock, and the prober stamps `t_a` when the echo
//! returns. The probe with the smallest RTT `t_a − t_s` wins, and the offset
//! of the reflector clock relative to the prober is `t_r − (t_s + RTT/2)`.
//! Since the reflector stamp falls inside `[t_s, t_a]` in true time, the
//! estimate is off by at most `RTT/2`, and `min_rtt` is reported as the bound.

use std::net::SocketAddr;
use std::thread;
use std::time::{Duration, Instant};

use aoi_core::{ClockBiasModel, Nanos};
use log::debug;
use serde::{Deserialize, Serialize};

use crate::clock::SessionClock;
use crate::link::{Link, Proto};
use crate::wire::{Packet, PacketType};
use crate::{NetError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OffsetEstimate {
    /// Estimated receiver-minus-sender offset `B̂`.
    pub bias_ns: Nanos,
    pub min_rtt_ns: u64,
    pub probes_used: usize,
}

impl OffsetEstimate {
    pub fn to_model(&self) -> ClockBiasModel {
        ClockBiasModel {
            bias: self.bias_ns,
            rtt_bound: self.min_rtt_ns as Nanos,
            probe_count: self.probes_used,
        }
    }
}

/// How much of the RTT is attributed to the forward path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffsetMode {
    /// `B̂ = t_r − (t_s + RTT/2)`, symmetric paths.
    #[default]
    HalfRtt,
    /// `B̂ = t_r − (t_s + RTT)`, charging the whole round trip to the
    /// forward direction.
    FullRtt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeSample {
    pub sent_ns: Nanos,
    pub reflector_ns: Nanos,
    pub returned_ns: Nanos,
}

impl ProbeSample {
    pub fn rtt(&self) -> Nanos {
        self.returned_ns - self.sent_ns
    }
}

pub fn estimate_from_samples(samples: &[ProbeSample], mode: OffsetMode) -> Result<OffsetEstimate> {
    let best = samples
        .iter()
        .filter(|s| s.rtt() >= 0)
        .min_by_key(|s| s.rtt())
        .ok_or(NetError::NoProbes)?;
    let rtt = best.rtt();
    let forward = match mode {
        OffsetMode::HalfRtt => rtt / 2,
        OffsetMode::FullRtt => rtt,
    };
    Ok(OffsetEstimate {
        bias_ns: best.reflector_ns - (best.sent_ns + forward),
        min_rtt_ns: rtt as u64,
        probes_used: samples.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub count: usize,
    /// Wait for each echo before giving the probe up.
    pub timeout: Duration,
    /// Gap between consecutive probes.
    pub interval: Duration,
    pub mode: OffsetMode,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            count: 10,
            timeout: Duration::from_millis(500),
            interval: Duration::from_millis(5),
            mode: OffsetMode::HalfRtt,
        }
    }
}

/// Sends `config.count` probes to a reflector and estimates its offset.
pub fn estimate_offset(
    endpoint: SocketAddr,
    proto: Proto,
    config: &ProbeConfig,
    clock: SessionClock,
) -> Result<OffsetEstimate> {
    if config.count == 0 {
        return Err(NetError::Config("probe count must be at least 1".into()));
    }
    let mut link = Link::connect(proto, endpoint)?;
    let mut samples = Vec::with_capacity(config.count);
    let mut buf = Vec::new();
    for k in 0..config.count as u64 {
        if k > 0 {
            thread::sleep(config.interval);
        }
        let sent_ns = clock.now_ns();
        link.send(&Packet::probe(k, sent_ns as u64).encode())?;
        let deadline = Instant::now() + config.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() || !link.recv(&mut buf, left)? {
                debug!("probe {k} timed out");
                break;
            }
            let returned_ns = clock.now_ns();
            match Packet::decode(&buf) {
                Ok(p) if p.ptype == PacketType::ProbeEcho && p.seq == k => {
                    samples.push(ProbeSample {
                        sent_ns,
                        reflector_ns: p.reflector_recv_ns.unwrap_or(0) as Nanos,
                        returned_ns,
                    });
                    break;
                }
                // late echo of an earlier probe or stray traffic
                _ => continue,
            }
        }
    }
    let mut est = estimate_from_samples(&samples, config.mode)?;
    est.probes_used = samples.len();
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_probe_arithmetic() {
        let s = ProbeSample {
            sent_ns: 100,
            reflector_ns: 650,
            returned_ns: 200,
        };
        let e = estimate_from_samples(&[s], OffsetMode::HalfRtt).unwrap();
        assert_eq!(e.bias_ns, 500);
        assert_eq!(e.min_rtt_ns, 100);
        assert_eq!(e.probes_used, 1);
        let full = estimate_from_samples(&[s], OffsetMode::FullRtt).unwrap();
        assert_eq!(full.bias_ns, 450);
    }

    #[test]
    fn minimum_rtt_probe_wins() {
        let samples = [
            ProbeSample { sent_ns: 0, reflector_ns: 900, returned_ns: 1000 },
            ProbeSample { sent_ns: 2000, reflector_ns: 2060, returned_ns: 2100 },
            ProbeSample { sent_ns: 3000, reflector_ns: 3100, returned_ns: 3400 },
        ];
        let e = estimate_from_samples(&samples, OffsetMode::HalfRtt).unwrap();
        assert_eq!(e.min_rtt_ns, 100);
        assert_eq!(e.bias_ns, 10);
        assert_eq!(e.probes_used, 3);
    }

    #[test]
    fn no_samples_is_an_error() {
        assert!(matches!(
            estimate_from_samples(&[], OffsetMode::HalfRtt),
            Err(NetError::NoProbes)
        ));
    }

    #[test]
    fn model_carries_bound() {
        let e = OffsetEstimate { bias_ns: -5, min_rtt_ns: 40, probes_used: 3 };
        let m = e.to_model();
        assert_eq!((m.bias, m.rtt_bound, m.probe_count), (-5, 40, 3));
    }
}
