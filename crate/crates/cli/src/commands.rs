use std::fmt;
use std::thread;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use aoi_core::io::read_trace_file;
use aoi_core::{
    compute_statistics_with, penalty_average, shift_reception, sync_bias_closed_form, ClockBiasModel,
    PenaltyFunction, PenaltyKind, Trace,
};
use aoi_net::{
    classify_regions, estimate_offset, run_receiver, run_relay, run_sender, run_sweep, DropPolicy,
    NetSweepConfig, OffsetEstimate, ProbeConfig, Proto, RatePlan, ReceiverConfig, RegionConfig,
    RelayConfig, SenderOptions, SessionClock,
};
use aoi_sim::{load_sweep, run_seed, simulate_queue, write_sweep_csv, ArrivalProcess, Horizon, ServiceProcess, SimConfig};
use serde::Serialize;

use crate::args::{ArrivalKind, Args, Mode, Role, ServiceKind};
use crate::report::Outputs;

/// Bad or missing parameters; reported with exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn run(args: &Args, out: &mut Outputs) -> Result<()> {
    match args.mode.ok_or_else(|| usage("--mode is required"))? {
        Mode::Analyze => analyze(args, out),
        Mode::Simulate => simulate(args, out),
        Mode::BiasExperiment => bias(args, out),
        Mode::Sweep => sweep(args, out),
        Mode::Measure => measure(args, out),
    }
}

fn penalty(args: &Args) -> Result<PenaltyFunction> {
    PenaltyFunction::new(args.penalty, args.alpha).map_err(|e| usage(e.to_string()))
}

fn region_config(args: &Args) -> Result<RegionConfig> {
    if !(args.window_s > 0.0 && args.window_s.is_finite()) {
        return Err(usage("--window-s must be positive"));
    }
    Ok(RegionConfig {
        window: Duration::from_secs_f64(args.window_s),
        ..RegionConfig::default()
    })
}

pub fn sim_config(args: &Args) -> Result<SimConfig> {
    let config = SimConfig {
        arrival: match args.arrival {
            ArrivalKind::Poisson => ArrivalProcess::Poisson { rate: args.lambda },
            ArrivalKind::Deterministic => ArrivalProcess::Deterministic { rate: args.lambda },
        },
        service: match args.service {
            ServiceKind::Exp => ServiceProcess::Exponential { rate: args.mu },
            ServiceKind::Deterministic => ServiceProcess::Deterministic { rate: args.mu },
        },
        buffer_capacity: args.queue_cap.and_then(|c| c.0),
        discipline: Default::default(),
        horizon: Horizon::Events(args.events),
        seed: args.seed,
        warmup_fraction: args.warmup,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

fn report_trace(args: &Args, out: &mut Outputs, trace: &Trace) -> Result<()> {
    let stats = compute_statistics_with(trace, &penalty(args)?);
    out.statistics(&stats)?;
    out.sample_path(trace)?;
    if !trace.is_empty() {
        let classes = classify_regions(trace, &region_config(args)?);
        out.regions(&classes.labels)?;
    }
    let show = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.9}"));
    println!("records          {}", stats.n_records);
    println!("effective        {}", stats.n_effective);
    println!("stale discarded  {}", stats.n_stale_discarded);
    println!("lost             {} ({})", stats.n_lost, stats.loss_runs.to_compact());
    println!("avg age (s)      {}", show(stats.avg_age));
    println!("peak age (s)     {}", show(stats.peak_age));
    println!("max age (s)      {}", show(stats.max_age));
    println!("mean delay (s)   {}", show(stats.mean_delay));
    println!("avg penalty      {} ({} α={})", show(stats.avg_penalty), args.penalty, args.alpha);
    Ok(())
}

fn analyze(args: &Args, out: &mut Outputs) -> Result<()> {
    let path = args.trace.as_ref().ok_or_else(|| usage("analyze needs --trace"))?;
    let trace = read_trace_file(path).with_context(|| format!("reading {}", path.display()))?;
    report_trace(args, out, &trace)
}

fn simulate(args: &Args, out: &mut Outputs) -> Result<()> {
    let config = sim_config(args)?;
    let outcome = simulate_queue(&config)?;
    if outcome.unstable {
        log::warn!("load {} with an unbounded buffer has no steady state", config.load());
    }
    out.trace("trace.csv", &outcome.trace)?;
    println!("load             {}", config.load());
    println!("arrivals         {}", outcome.arrivals);
    println!("dropped          {}", outcome.dropped());
    report_trace(args, out, &outcome.trace)
}

#[derive(Serialize)]
struct BiasRow {
    run: usize,
    seed: u64,
    unbiased: f64,
    biased: f64,
    difference: f64,
    closed_form: Option<f64>,
}

fn bias_row(run: usize, seed: u64, trace: &Trace, f: &PenaltyFunction, b: i64) -> Result<BiasRow> {
    let unbiased = penalty_average(trace, f)?;
    let shifted = shift_reception(trace, &ClockBiasModel::constant(b));
    if shifted.negative_delay {
        log::warn!("run {run}: bias makes some delays negative");
    }
    let biased = penalty_average(&shifted.trace, f)?;
    Ok(BiasRow {
        run,
        seed,
        unbiased,
        biased,
        difference: biased - unbiased,
        closed_form: sync_bias_closed_form(trace, f, b).ok(),
    })
}

fn bias(args: &Args, out: &mut Outputs) -> Result<()> {
    let f = penalty(args)?;
    let rows: Vec<BiasRow> = match &args.trace {
        Some(path) => {
            let trace = read_trace_file(path).with_context(|| format!("reading {}", path.display()))?;
            vec![bias_row(0, 0, &trace, &f, args.bias_ns)?]
        }
        None => {
            if args.seeds == 0 {
                return Err(usage("--seeds must be positive"));
            }
            let base = sim_config(args)?;
            (0..args.seeds)
                .map(|k| {
                    let seed = run_seed(args.seed, k as u64);
                    let trace = simulate_queue(&base.with_seed(seed))?.trace;
                    bias_row(k, seed, &trace, &f, args.bias_ns)
                })
                .collect::<Result<_>>()?
        }
    };
    out.write("bias.csv", |w| {
        writeln!(w, "run,seed,unbiased,biased,difference,closed_form")?;
        for r in &rows {
            let c = r.closed_form.map(|c| c.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{},{c}", r.run, r.seed, r.unbiased, r.biased, r.difference)?;
        }
        Ok(())
    })?;

    let diffs: Vec<f64> = rows.iter().map(|r| r.difference).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    println!("runs             {}", rows.len());
    println!("mean difference  {mean:.12}");
    println!("cv               {}", if mean != 0.0 { sd / mean.abs() } else { 0.0 });
    if args.penalty == PenaltyKind::Linear {
        let expected = args.alpha * aoi_core::to_secs(args.bias_ns);
        println!("expected αB      {expected}");
        if let Some(bad) = rows.iter().find(|r| (r.difference - expected).abs() > 1e-6) {
            bail!(
                "run {}: linear bias {} differs from αB = {expected}",
                bad.run,
                bad.difference
            );
        }
    }
    Ok(())
}

fn sweep(args: &Args, out: &mut Outputs) -> Result<()> {
    match args.proto {
        None => sim_sweep(args, out),
        Some(proto) => net_sweep(args, proto, out),
    }
}

fn sim_sweep(args: &Args, out: &mut Outputs) -> Result<()> {
    let base = sim_config(args)?;
    let rates = if args.rates.is_empty() {
        (1..=9).map(|k| k as f64 / 10.0 * args.mu).collect()
    } else {
        args.rates.clone()
    };
    let result = load_sweep(&base, &rates, args.seeds).map_err(|e| usage(e.to_string()))?;
    out.write("sweep.csv", |w| Ok(write_sweep_csv(&result, w)?))?;
    for p in &result.points {
        println!(
            "λ={:<8} ρ={:<6.3} avg_age={:.6} peak_age={:.6} loss={:.4}{}",
            p.rate,
            p.load,
            p.avg_age,
            p.peak_age,
            p.loss_fraction,
            if p.unstable { " (unstable)" } else { "" }
        );
    }
    if let Some(i) = result.argmin() {
        println!("min avg age at λ={}", result.points[i].rate);
    }
    Ok(())
}

fn plan(args: &Args) -> Result<RatePlan> {
    if let Some(p) = &args.rate_plan {
        return Ok(p.clone());
    }
    if !args.rates.is_empty() {
        if !(args.dwell_s > 0.0 && args.dwell_s.is_finite()) {
            return Err(usage("--dwell-s must be positive"));
        }
        return RatePlan::from_rates(&args.rates, Duration::from_secs_f64(args.dwell_s))
            .map_err(|e| usage(e.to_string()));
    }
    Err(usage("a rate plan is needed: --rate-plan start:end:step:dwell_s or --rates"))
}

fn net_sweep(args: &Args, proto: Proto, out: &mut Outputs) -> Result<()> {
    let mut config = NetSweepConfig::desk_scale(proto);
    if args.rate_plan.is_some() || !args.rates.is_empty() {
        config.plan = plan(args)?;
    }
    config.sender.payload = args.payload;
    config.service_rate = args.service_rate;
    if let Some(c) = args.queue_cap {
        config.queue_capacity = c.0;
    }
    if let Some(p) = args.drop_policy {
        config.drop_policy = p;
    }
    config.regions = region_config(args)?;
    config.seed = args.seed;

    let result = run_sweep(&config)?;
    out.write("sweep.csv", |w| Ok(aoi_net::write_sweep_csv(&result.steps, w)?))?;
    out.regions(&result.windows)?;
    out.trace("trace.csv", &result.trace)?;
    for s in &result.steps {
        println!(
            "offered={:<7} achieved={:<9.1} loss={:.4} avg_age={} region={}{}",
            s.offered_rate,
            s.achieved_rate,
            s.loss_fraction,
            s.avg_age.map_or("-".into(), |a| format!("{a:.6}")),
            s.region.map_or("-".into(), |r| r.to_string()),
            if s.shortfall { " (shortfall)" } else { "" }
        );
    }
    if result.baseline_fallback {
        println!("no low-loss window; delays compared with the global median");
    }
    let labels: Vec<String> = result.label_sequence().iter().map(|r| r.to_string()).collect();
    println!("regions: {}", labels.join(" -> "));
    Ok(())
}

fn measure(args: &Args, out: &mut Outputs) -> Result<()> {
    let role = args.role.ok_or_else(|| usage("measure needs --role send|recv|relay|probe"))?;
    let addr = args.addr.ok_or_else(|| usage("measure needs --addr host:port"))?;
    let proto = args.proto.unwrap_or(Proto::Udp);
    let clock = SessionClock::new();
    let lifetime = Duration::from_secs_f64(args.duration_s.max(0.0));
    match role {
        Role::Send => {
            let options = SenderOptions {
                payload: args.payload,
                ..SenderOptions::default()
            };
            let log = run_sender(addr, proto, &plan(args)?, &options, clock)?;
            out.json("send_log.json", &log)?;
            for s in &log.steps {
                println!(
                    "target={} achieved={:.1} sent={}{}{}",
                    s.target_rate,
                    s.achieved_rate,
                    s.sent,
                    if s.shortfall { " (shortfall)" } else { "" },
                    s.error.as_deref().map(|e| format!(" error: {e}")).unwrap_or_default()
                );
            }
        }
        Role::Recv => {
            let rx = run_receiver(ReceiverConfig {
                offset: OffsetEstimate {
                    bias_ns: args.offset_ns,
                    ..OffsetEstimate::default()
                },
                ..ReceiverConfig::new(addr, proto, clock)
            })?;
            eprintln!("receiving on {} for {:?}", rx.local_addr(), lifetime);
            thread::sleep(lifetime);
            let report = rx.stop()?;
            println!("malformed        {}", report.malformed);
            println!("resets           {}", report.resets);
            println!("probes answered  {}", report.probes_answered);
            out.trace("trace.csv", &report.trace)?;
            report_trace(args, out, &report.trace)?;
        }
        Role::Relay => {
            let upstream = args.upstream.ok_or_else(|| usage("relay needs --upstream host:port"))?;
            let relay = run_relay(RelayConfig {
                queue_capacity: args.queue_cap.map_or(Some(100), |c| c.0),
                drop_policy: args.drop_policy.unwrap_or(DropPolicy::TailDrop),
                seed: args.seed,
                ..RelayConfig::new(addr, upstream, proto, args.service_rate)
            })?;
            eprintln!("relaying {} -> {upstream} for {:?}", relay.local_addr(), lifetime);
            thread::sleep(lifetime);
            let report = relay.stop();
            println!("forwarded {} dropped {}", report.forwarded, report.dropped);
            out.json("relay.json", &report)?;
        }
        Role::Probe => {
            let config = ProbeConfig {
                count: args.probes,
                ..ProbeConfig::default()
            };
            if config.count == 0 {
                return Err(usage("--probes must be at least 1"));
            }
            let est = estimate_offset(addr, proto, &config, clock)?;
            println!("offset_ns   {}", est.bias_ns);
            println!("min_rtt_ns  {}", est.min_rtt_ns);
            println!("probes      {}", est.probes_used);
            out.json("offset.json", &est)?;
        }
    }
    Ok(())
}
