//! Loopback sweep: sender → relay → receiver in one process.

use std::io::Write;
use std::net::SocketAddr;
use std::thread;
use std::time::{Duration, Instant};

use aoi_core::{peak_average_age, time_average_age, AverageMethod, Nanos, Trace};
use serde::{Deserialize, Serialize};

use crate::clock::SessionClock;
use crate::link::Proto;
use crate::receiver::{run_receiver, ReceiverConfig};
use crate::regions::{classify_regions, majority_label, Region, RegionConfig, RegionLabel};
use crate::relay::{run_relay, DropPolicy, RelayConfig, RelayReport};
use crate::sender::{run_sender, RatePlan, SendLog, SenderOptions};
use crate::Result;

pub const NET_SWEEP_HEADER: &str = "offered_rate,achieved_rate,avg_age,peak_age,loss_fraction,region";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSweepConfig {
    pub proto: Proto,
    pub plan: RatePlan,
    pub sender: SenderOptions,
    pub service_rate: f64,
    pub queue_capacity: Option<usize>,
    pub drop_policy: DropPolicy,
    pub regions: RegionConfig,
    pub seed: u64,
    pub tcp_buffer: Option<usize>,
    /// Upper bound on the wait for in-flight packets after the last step.
    pub max_drain: Duration,
}

impl NetSweepConfig {
    /// 1000 pkt/s relay with room for 100 packets and a mild early-random
    /// drop above half load, swept from 100 to 5000 pkt/s.
    pub fn desk_scale(proto: Proto) -> Self {
        let rates = [100.0, 200.0, 400.0, 700.0, 900.0, 1200.0, 1600.0, 2500.0, 5000.0];
        Self {
            proto,
            plan: RatePlan::from_rates(&rates, Duration::from_secs(4)).expect("valid plan"),
            sender: SenderOptions::default(),
            service_rate: 1000.0,
            queue_capacity: Some(100),
            drop_policy: DropPolicy::EarlyRandom {
                onset: 0.5,
                max_prob: 0.02,
            },
            regions: RegionConfig::default(),
            seed: 1,
            tcp_buffer: Some(4096),
            max_drain: Duration::from_secs(20),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetStepResult {
    pub offered_rate: f64,
    pub achieved_rate: f64,
    pub sent: u64,
    pub received: u64,
    pub loss_fraction: f64,
    /// Received seqs of the step, in arrival order, are exactly
    /// `first..=last` with no gap or reordering.
    pub in_order: bool,
    pub avg_age: Option<f64>,
    pub peak_age: Option<f64>,
    /// Majority label of the windows centred in this step.
    pub region: Option<Region>,
    /// Mean age over the step's Panicked windows.
    pub panicked_avg_age: Option<f64>,
    pub shortfall: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetSweepResult {
    pub steps: Vec<NetStepResult>,
    pub windows: Vec<RegionLabel>,
    pub baseline_ns: Nanos,
    pub baseline_fallback: bool,
    pub trace: Trace,
    pub send_log: SendLog,
    pub relay: RelayReport,
}

impl NetSweepResult {
    /// Step labels with consecutive repeats removed.
    pub fn label_sequence(&self) -> Vec<Region> {
        let mut seq: Vec<Region> = Vec::new();
        for r in self.steps.iter().filter_map(|s| s.region) {
            if seq.last() != Some(&r) {
                seq.push(r);
            }
        }
        seq
    }
}

pub fn run_sweep(config: &NetSweepConfig) -> Result<NetSweepResult> {
    config.plan.validate()?;
    let clock = SessionClock::new();
    let loopback: SocketAddr = "127.0.0.1:0".parse().unwrap();
    let receiver = run_receiver(ReceiverConfig::new(loopback, config.proto, clock))?;
    let relay = run_relay(RelayConfig {
        queue_capacity: config.queue_capacity,
        drop_policy: config.drop_policy,
        seed: config.seed,
        tcp_buffer: config.tcp_buffer,
        ..RelayConfig::new(loopback, receiver.local_addr(), config.proto, config.service_rate)
    })?;

    let send_log = run_sender(relay.local_addr(), config.proto, &config.plan, &config.sender, clock)?;

    // wait until the path is quiet
    let deadline = Instant::now() + config.max_drain;
    let mut last = receiver.received();
    let mut quiet = 0;
    while quiet < 3 && Instant::now() < deadline {
        thread::sleep(Duration::from_millis(100));
        let now = receiver.received();
        quiet = if now == last { quiet + 1 } else { 0 };
        last = now;
    }
    let relay_report = relay.stop();
    let trace = receiver.stop()?.trace;
    Ok(summarize(config, trace, send_log, relay_report))
}

fn summarize(config: &NetSweepConfig, trace: Trace, send_log: SendLog, relay: RelayReport) -> NetSweepResult {
    let classes = classify_regions(&trace, &config.regions);
    let steps = send_log
        .steps
        .iter()
        .map(|s| {
            let (Some(first), Some(last)) = (s.first_seq, s.last_seq) else {
                return NetStepResult {
                    offered_rate: s.target_rate,
                    achieved_rate: s.achieved_rate,
                    sent: 0,
                    received: 0,
                    loss_fraction: 0.0,
                    in_order: true,
                    avg_age: None,
                    peak_age: None,
                    region: None,
                    panicked_avg_age: None,
                    shortfall: s.shortfall,
                    error: s.error.clone(),
                };
            };
            let range = first..=last;
            let seqs: Vec<u64> = trace
                .records()
                .iter()
                .map(|r| r.seq)
                .filter(|q| range.contains(q))
                .collect();
            let mut unique = seqs.clone();
            unique.sort_unstable();
            unique.dedup();
            let received = unique.len() as u64;
            let in_order = seqs.iter().copied().eq(first..=last);
            let sub = trace.slice_seq(range.clone());
            let windows: Vec<&RegionLabel> = classes
                .labels
                .iter()
                .filter(|w| range.contains(&((w.window.0 + w.window.1) / 2)))
                .collect();
            let panicked: Vec<f64> = windows
                .iter()
                .filter(|w| w.label == Region::Panicked)
                .filter_map(|w| w.avg_age)
                .collect();
            NetStepResult {
                offered_rate: s.target_rate,
                achieved_rate: s.achieved_rate,
                sent: s.sent,
                received,
                loss_fraction: 1.0 - received as f64 / s.sent as f64,
                in_order,
                avg_age: sub.as_ref().and_then(|t| time_average_age(t, AverageMethod::HForm).ok()),
                peak_age: sub.as_ref().and_then(|t| peak_average_age(t).ok()),
                region: majority_label(windows.iter().map(|w| w.label)),
                panicked_avg_age: (!panicked.is_empty())
                    .then(|| panicked.iter().sum::<f64>() / panicked.len() as f64),
                shortfall: s.shortfall,
                error: s.error.clone(),
            }
        })
        .collect();
    NetSweepResult {
        steps,
        windows: classes.labels,
        baseline_ns: classes.baseline_ns,
        baseline_fallback: classes.baseline_fallback,
        trace,
        send_log,
        relay,
    }
}

pub fn write_sweep_csv<W: Write>(steps: &[NetStepResult], mut out: W) -> std::io::Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    writeln!(out, "{NET_SWEEP_HEADER}")?;
    for s in steps {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.offered_rate,
            s.achieved_rate,
            opt(s.avg_age),
            opt(s.peak_age),
            s.loss_fraction,
            s.region.map(|r| r.to_string()).unwrap_or_default()
        )?;
    }
    Ok(())
}
