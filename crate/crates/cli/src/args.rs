use std::net::SocketAddr;
use std::path::PathBuf;
use std::str::FromStr;

use aoi_core::PenaltyKind;
use aoi_net::{DropPolicy, Proto, RatePlan};
use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Measure,
    Simulate,
    Analyze,
    BiasExperiment,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Send,
    Recv,
    Relay,
    Probe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalKind {
    Poisson,
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceKind {
    Exp,
    Deterministic,
}

/// Queue capacity: a packet count, or `none` for unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capacity(pub Option<usize>);

impl FromStr for Capacity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" | "inf" | "unbounded" => Ok(Capacity(None)),
            n => n
                .parse()
                .map(|c| Capacity(Some(c)))
                .map_err(|_| format!("'{n}' is not a packet count or 'none'")),
        }
    }
}

/// `tail` or `early[:onset:max_prob]`.
pub fn parse_drop_policy(s: &str) -> Result<DropPolicy, String> {
    let mut parts = s.split(':');
    match parts.next() {
        Some("tail") if parts.next().is_none() => Ok(DropPolicy::TailDrop),
        Some("early") => {
            let rest: Vec<&str> = parts.collect();
            let (onset, max_prob) = match rest[..] {
                [] => (0.5, 0.02),
                [a, b] => (
                    a.parse().map_err(|_| format!("bad onset '{a}'"))?,
                    b.parse().map_err(|_| format!("bad max_prob '{b}'"))?,
                ),
                _ => return Err(format!("'{s}' is not early[:onset:max_prob]")),
            };
            Ok(DropPolicy::EarlyRandom { onset, max_prob })
        }
        _ => Err(format!("unknown drop policy '{s}', expected tail|early[:onset:max_prob]")),
    }
}

fn parse_rate_plan(s: &str) -> Result<RatePlan, String> {
    s.parse::<RatePlan>().map_err(|e| e.to_string())
}

/// Age-of-information measurement, simulation and analysis.
#[derive(Debug, Clone, Parser, Serialize, Deserialize)]
#[command(name = "aoi", version)]
pub struct Args {
    #[arg(long, value_enum, required_unless_present = "manifest")]
    pub mode: Option<Mode>,

    /// Measurement role.
    #[arg(long, value_enum)]
    pub role: Option<Role>,
    /// Transport; for `sweep`, selects a live loopback sweep instead of the simulator.
    #[arg(long)]
    pub proto: Option<Proto>,
    /// Local address for recv/relay, destination for send/probe.
    #[arg(long)]
    pub addr: Option<SocketAddr>,
    /// Relay downstream address.
    #[arg(long)]
    pub upstream: Option<SocketAddr>,
    /// `start:end:step:dwell_s` in packets per second.
    #[arg(long, value_parser = parse_rate_plan)]
    pub rate_plan: Option<RatePlan>,
    /// Explicit rates for a sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub rates: Vec<f64>,
    /// Dwell per rate when `--rates` drives a live sweep.
    #[arg(long, default_value_t = 4.0)]
    pub dwell_s: f64,
    /// UPDATE size in bytes.
    #[arg(long, default_value_t = 64)]
    pub payload: usize,
    /// Relay rate in packets per second.
    #[arg(long, default_value_t = 1000.0)]
    pub service_rate: f64,
    /// Queue capacity in packets, or `none`. Relay default 100, simulator default unbounded.
    #[arg(long)]
    pub queue_cap: Option<Capacity>,
    /// `tail` or `early[:onset:max_prob]`.
    #[arg(long, value_parser = parse_drop_policy)]
    pub drop_policy: Option<DropPolicy>,
    #[arg(long, default_value_t = 10)]
    pub probes: usize,
    /// Receiver clock correction `B̂` in ns.
    #[arg(long, default_value_t = 0)]
    pub offset_ns: i64,
    /// Lifetime of recv and relay roles.
    #[arg(long, default_value_t = 60.0)]
    pub duration_s: f64,
    /// Output directory.
    #[arg(long, default_value = "aoi-out")]
    pub out: PathBuf,
    /// Region window length.
    #[arg(long, default_value_t = 1.0)]
    pub window_s: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    #[arg(long, default_value = "linear")]
    pub penalty: PenaltyKind,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Reception clock offset for the bias experiment, ns.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub bias_ns: i64,

    /// Simulator arrival rate.
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    /// Simulator service rate.
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, value_enum, default_value_t = ArrivalKind::Poisson)]
    pub arrival: ArrivalKind,
    #[arg(long, value_enum, default_value_t = ServiceKind::Exp)]
    pub service: ServiceKind,
    /// Simulated arrivals per run.
    #[arg(long, default_value_t = 100_000)]
    pub events: u64,
    #[arg(long, default_value_t = 0.05)]
    pub warmup: f64,
    /// Independent runs per configuration.
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,

    /// Trace CSV to analyze, or to use instead of simulating in `bias-experiment`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Re-run the parameters recorded in a manifest.
    #[arg(long)]
    #[serde(skip)]
    pub manifest: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_capacity() {
        assert_eq!("100".parse::<Capacity>().unwrap(), Capacity(Some(100)));
        assert_eq!("none".parse::<Capacity>().unwrap(), Capacity(None));
        assert!("-3".parse::<Capacity>().is_err());
    }

    #[test]
    fn parses_drop_policy() {
        assert_eq!(parse_drop_policy("tail").unwrap(), DropPolicy::TailDrop);
        assert_eq!(
            parse_drop_policy("early").unwrap(),
            DropPolicy::EarlyRandom { onset: 0.5, max_prob: 0.02 }
        );
        assert_eq!(
            parse_drop_policy("early:0.6:0.1").unwrap(),
            DropPolicy::EarlyRandom { onset: 0.6, max_prob: 0.1 }
        );
        assert!(parse_drop_policy("tail:1").is_err());
        assert!(parse_drop_policy("red").is_err());
    }

    #[test]
    fn flags_parse() {
        let a = Args::try_parse_from([
            "aoi", "--mode", "bias-experiment", "--penalty", "exp", "--bias-ns", "-5", "--rates", "1,2,3",
        ])
        .unwrap();
        assert_eq!(a.mode, Some(Mode::BiasExperiment));
        assert_eq!(a.penalty, PenaltyKind::Exponential);
        assert_eq!(a.bias_ns, -5);
        assert_eq!(a.rates, [1.0, 2.0, 3.0]);
        assert!(Args::try_parse_from(["aoi"]).is_err());
    }

    #[test]
    fn args_survive_json() {
        let a = Args::try_parse_from(["aoi", "--mode", "simulate", "--queue-cap", "5", "--rate-plan", "10:20:10:1"]).unwrap();
        let back: Args = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(back.queue_cap, Some(Capacity(Some(5))));
        assert_eq!(back.rate_plan, a.rate_plan);
    }
}
