//! Paced `UPDATE` generator.

use std::net::SocketAddr;
use std::str::FromStr;
use std::thread;
use std::time::{Duration, Instant};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::clock::SessionClock;
use crate::link::{Link, Proto};
use crate::wire::Packet;
use crate::{NetError, Result};

/// Achieved rates below this fraction of the target are flagged.
pub const SHORTFALL_RATIO: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateStep {
    /// Packets per second.
    pub rate: f64,
    pub duration: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePlan {
    pub steps: Vec<RateStep>,
}

impl RatePlan {
    pub fn from_rates(rates: &[f64], dwell: Duration) -> Result<Self> {
        let steps: Vec<RateStep> = rates
            .iter()
            .map(|&rate| RateStep { rate, duration: dwell })
            .collect();
        let plan = Self { steps };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(NetError::Config("empty rate plan".into()));
        }
        for s in &self.steps {
            if !(s.rate > 0.0 && s.rate.is_finite()) || s.duration.is_zero() {
                return Err(NetError::Config(format!(
                    "rate step needs positive rate and duration, got {} pkt/s for {:?}",
                    s.rate, s.duration
                )));
            }
        }
        Ok(())
    }

    pub fn rates(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.rate).collect()
    }

    pub fn total_duration(&self) -> Duration {
        self.steps.iter().map(|s| s.duration).sum()
    }
}

/// `start:end:step:dwell_s`, rates `start, start+step, …` up to `end`.
impl FromStr for RatePlan {
    type Err = NetError;

    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn from_str(s: &str) -> Result<Self> {
        let bad = || NetError::Config(format!("rate plan '{s}' is not start:end:step:dwell_s"));
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [start, end, step, dwell] = parts[..] else {
            return Err(bad());
        };
        if !(start > 0.0 && end >= start && dwell > 0.0) || (end > start && !(step > 0.0)) {
            return Err(bad());
        }
        let mut rates = vec![start];
        if end > start {
            let n = ((end - start) / step + 1e-9).floor() as usize;
            rates.extend((1..=n).map(|k| start + k as f64 * step));
        }
        Self::from_rates(&rates, Duration::from_secs_f64(dwell))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub target_rate: f64,
    pub sent: u64,
    pub first_seq: Option<u64>,
    pub last_seq: Option<u64>,
    /// Sender-clock span of the step.
    pub start_ns: i64,
    pub end_ns: i64,
    pub achieved_rate: f64,
    pub shortfall: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SendLog {
    pub steps: Vec<StepReport>,
}

impl SendLog {
    pub fn total_sent(&self) -> u64 {
        self.steps.iter().map(|s| s.sent).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SenderOptions {
    /// Encoded `UPDATE` size, at least the 21-byte header.
    pub payload: usize,
    /// Kernel send buffer for TCP; `None` keeps the OS default.
    pub tcp_send_buffer: Option<usize>,
}

impl Default for SenderOptions {
    fn default() -> Self {
        Self {
            payload: 64,
            tcp_send_buffer: Some(4096),
        }
    }
}

/// Sends `UPDATE`s to `endpoint` following `plan`. Packet `j` of a step is
/// due `j/rate` after the step starts; a late sender catches up without
/// skipping. The generation stamp is read right before each send.
pub fn run_sender(
    endpoint: SocketAddr,
    proto: Proto,
    plan: &RatePlan,
    options: &SenderOptions,
    clock: SessionClock,
) -> Result<SendLog> {
    plan.validate()?;
    let payload = options.payload;
    let connect = || Link::connect_with(proto, endpoint, options.tcp_send_buffer);
    let mut link = Some(connect()?);
    let mut log = SendLog::default();
    let mut seq = 0u64;
    let mut buf = Vec::with_capacity(payload);

    for step in &plan.steps {
        let interval = 1e9 / step.rate;
        let started = Instant::now();
        let stop_at = started + step.duration;
        let start_ns = clock.at(started);
        let first = seq;
        let mut error = None;

        if link.is_none() {
            match connect() {
                Ok(l) => link = Some(l),
                Err(e) => error = Some(format!("reconnect failed: {e}")),
            }
        }
        if let Some(l) = link.as_mut() {
            for j in 0u64.. {
                let due = started + Duration::from_nanos((j as f64 * interval) as u64);
                if due >= stop_at {
                    break;
                }
                let now = Instant::now();
                if due > now {
                    thread::sleep(due - now);
                }
                if Instant::now() >= stop_at {
                    break;
                }
                let gen_ns = clock.now_ns();
                Packet::update(seq, gen_ns as u64, payload).encode_into(&mut buf);
                if let Err(e) = l.send(&buf) {
                    warn!("send failed at seq {seq}: {e}");
                    error = Some(e.to_string());
                    break;
                }
                seq += 1;
            }
        }
        if error.is_some() && proto == Proto::Tcp {
            link = None;
        }

        let finished = Instant::now();
        let elapsed = (finished - started).max(step.duration).as_secs_f64();
        let sent = seq - first;
        let achieved_rate = sent as f64 / elapsed;
        let shortfall = achieved_rate < SHORTFALL_RATIO * step.rate;
        if shortfall {
            warn!("step at {} pkt/s achieved {achieved_rate:.1} pkt/s", step.rate);
        }
        log.steps.push(StepReport {
            target_rate: step.rate,
            sent,
            first_seq: (sent > 0).then_some(first),
            last_seq: (sent > 0).then(|| seq - 1),
            start_ns,
            end_ns: clock.at(finished),
            achieved_rate,
            shortfall,
            error,
        });
    }
    Ok(log)
}
