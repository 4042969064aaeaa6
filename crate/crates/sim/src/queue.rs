use std::collections::VecDeque;

use aoi_core::{from_secs, Nanos, Trace, TraceMeta, UpdateRecord};

use crate::config::{ArrivalProcess, Discipline, Horizon, ServiceProcess, SimConfig};
use crate::rng::SimRng;
use crate::Result;

const ARRIVAL_STREAM: u64 = 0;
const SERVICE_STREAM: u64 = 1;

/// One served packet in the event log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServiceRecord {
    pub seq: u64,
    pub arrival: Nanos,
    pub start: Nanos,
    pub departure: Nanos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    /// Post-warm-up trace: `gen_time` = arrival, `recv_time` = departure.
    pub trace: Trace,
    /// Every served packet, warm-up included, in service order.
    pub log: Vec<ServiceRecord>,
    pub dropped_seqs: Vec<u64>,
    pub arrivals: u64,
    /// Unbounded buffer at `ρ ≥ 1`: the queue has no steady state.
    pub unstable: bool,
}

impl SimOutcome {
    pub fn dropped(&self) -> u64 {
        self.dropped_seqs.len() as u64
    }

    pub fn loss_fraction(&self) -> f64 {
        if self.arrivals == 0 {
            0.0
        } else {
            self.dropped() as f64 / self.arrivals as f64
        }
    }
}

struct Arrivals {
    process: ArrivalProcess,
    rng: SimRng,
    k: u64,
    last: Nanos,
}

impl Iterator for Arrivals {
    type Item = Nanos;

    fn next(&mut self) -> Option<Nanos> {
        let t = match self.process {
            ArrivalProcess::Deterministic { rate } => (self.k as f64 * 1e9 / rate).round() as Nanos,
            ArrivalProcess::Poisson { rate } => self.last + from_secs(self.rng.exponential(rate)),
        };
        self.k += 1;
        self.last = t;
        Some(t)
    }
}

fn service_time(process: ServiceProcess, rng: &mut SimRng) -> Nanos {
    match process {
        ServiceProcess::Deterministic { rate } => from_secs(1.0 / rate),
        ServiceProcess::Exponential { rate } => from_secs(rng.exponential(rate)),
    }
}

/// Runs one single-server queue to the configured horizon.
pub fn simulate_queue(config: &SimConfig) -> Result<SimOutcome> {
    config.validate()?;
    let Discipline::Fcfs = config.discipline;

    let mut arrivals = Arrivals {
        process: config.arrival,
        rng: SimRng::new(config.seed, ARRIVAL_STREAM),
        k: 0,
        last: 0,
    };
    let mut service_rng = SimRng::new(config.seed, SERVICE_STREAM);

    // departure times of the packets currently in the system
    let mut in_system: VecDeque<Nanos> = VecDeque::new();
    let mut last_departure = Nanos::MIN;
    let mut log = Vec::new();
    let mut dropped_seqs = Vec::new();
    let mut seq = 0u64;

    loop {
        match config.horizon {
            Horizon::Events(n) if seq >= n => break,
            _ => {}
        }
        let arrival = arrivals.next().expect("arrival stream is infinite");
        if let Horizon::Duration(d) = config.horizon {
            if arrival >= d {
                break;
            }
        }
        while in_system.front().is_some_and(|&dep| dep <= arrival) {
            in_system.pop_front();
        }
        if config.buffer_capacity.is_some_and(|cap| in_system.len() > cap) {
            dropped_seqs.push(seq);
        } else {
            let start = arrival.max(last_departure);
            let departure = start + service_time(config.service, &mut service_rng);
            last_departure = departure;
            in_system.push_back(departure);
            log.push(ServiceRecord {
                seq,
                arrival,
                start,
                departure,
            });
        }
        seq += 1;
    }

    let trace = build_trace(&log, seq, config.warmup_fraction)?;
    Ok(SimOutcome {
        trace,
        log,
        dropped_seqs,
        arrivals: seq,
        unstable: config.buffer_capacity.is_none() && config.load() >= 1.0,
    })
}

/// The last served packet of the warm-up period becomes the initial state;
/// everything served after it forms the trace.
fn build_trace(log: &[ServiceRecord], arrivals: u64, warmup: f64) -> Result<Trace> {
    let cutoff = (warmup * arrivals as f64).floor() as u64;
    let anchor_idx = log
        .iter()
        .rposition(|r| r.seq < cutoff)
        .unwrap_or(0);
    let Some(anchor) = log.get(anchor_idx) else {
        return Ok(Trace::from_records(Vec::new())?);
    };
    let records: Vec<UpdateRecord> = log[anchor_idx + 1..]
        .iter()
        .map(|r| UpdateRecord::new(r.seq, r.arrival, r.departure))
        .collect();
    let end = records.last().map_or(anchor.departure, |r| r.recv_time);
    Ok(Trace::new(
        records,
        TraceMeta {
            observe_start: Some(anchor.departure),
            observe_end: Some(end),
            initial_age: Some(anchor.departure - anchor.arrival),
            clock_bias: None,
        },
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use aoi_core::{time_average_age, AverageMethod};

    #[test]
    fn dd1_has_no_queueing() {
        let out = simulate_queue(&SimConfig::dd1(0.5, 1.0, 100)).unwrap();
        assert!(out.trace.records().iter().all(|r| r.delay() == 1_000_000_000));
        assert_eq!(out.dropped(), 0);
        let avg = time_average_age(&out.trace, AverageMethod::HForm).unwrap();
        assert!((avg - 2.0).abs() < 1e-12);
    }

    #[test]
    fn warmup_anchor_is_initial_state() {
        let out = simulate_queue(&SimConfig::dd1(0.5, 1.0, 100)).unwrap();
        // 5 warm-up arrivals: seq 0..=4, anchor seq 4
        assert_eq!(out.trace.records()[0].seq, 5);
        assert_eq!(out.trace.observe_start(), out.log[4].departure);
        assert_eq!(out.trace.initial_age(), 1_000_000_000);
        assert_eq!(out.arrivals, 100);
    }

    #[test]
    fn zero_warmup_anchors_on_first_packet() {
        let mut c = SimConfig::dd1(0.5, 1.0, 10);
        c.warmup_fraction = 0.0;
        let out = simulate_queue(&c).unwrap();
        assert_eq!(out.trace.records()[0].seq, 1);
        assert_eq!(out.trace.len(), 9);
    }

    #[test]
    fn tiny_buffer_drops_under_overload() {
        let mut c = SimConfig::mm1(10.0, 1.0, 2000, 3);
        c.buffer_capacity = Some(1);
        let out = simulate_queue(&c).unwrap();
        assert!(out.loss_fraction() > 0.5);
        assert!(!out.unstable);
        let seqs: Vec<u64> = out.trace.records().iter().map(|r| r.seq).collect();
        assert!(seqs.windows(2).any(|w| w[1] > w[0] + 1));
        // at most one waiting plus one in service
        for (i, r) in out.log.iter().enumerate() {
            let ahead = out.log[..i].iter().filter(|p| p.departure > r.arrival).count();
            assert!(ahead <= 1);
        }
    }

    #[test]
    fn zero_capacity_is_pure_loss() {
        let mut c = SimConfig::dd1(2.0, 1.0, 20);
        c.buffer_capacity = Some(0);
        let out = simulate_queue(&c).unwrap();
        assert!(out.log.iter().all(|r| r.start == r.arrival));
        assert_eq!(out.dropped(), 10);
    }

    #[test]
    fn overload_without_buffer_limit_is_flagged() {
        let out = simulate_queue(&SimConfig::mm1(2.0, 1.0, 500, 1)).unwrap();
        assert!(out.unstable);
        assert_eq!(out.dropped(), 0);
    }

    #[test]
    fn duration_horizon() {
        let mut c = SimConfig::dd1(1.0, 2.0, 1);
        c.horizon = Horizon::Duration(from_secs(10.0));
        let out = simulate_queue(&c).unwrap();
        assert_eq!(out.arrivals, 10);
        assert!(out.log.iter().all(|r| r.arrival < from_secs(10.0)));
    }

    #[test]
    fn fcfs_and_work_conserving() {
        let out = simulate_queue(&SimConfig::mm1(0.9, 1.0, 5000, 11)).unwrap();
        for w in out.log.windows(2) {
            assert!(w[1].departure >= w[0].departure);
            assert!(w[1].seq > w[0].seq);
            // idle only when the next packet has not arrived yet
            assert_eq!(w[1].start, w[1].arrival.max(w[0].departure));
        }
    }
}
