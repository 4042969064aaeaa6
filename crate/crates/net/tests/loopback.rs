use std::io::Write;
use std::net::{SocketAddr, TcpStream, UdpSocket};
use std::thread;
use std::time::Duration;

use aoi_net::wire::{write_frame, Packet};
use aoi_net::*;
use aoi_sim::{ArrivalProcess, ServiceProcess, SimConfig};

fn any_port() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

fn plan(rates: &[f64], secs: f64) -> RatePlan {
    RatePlan::from_rates(rates, Duration::from_secs_f64(secs)).unwrap()
}

fn settle() {
    thread::sleep(Duration::from_millis(300));
}

#[test]
fn udp_direct_rate_times_duration() {
    let clock = SessionClock::new();
    let rx = run_receiver(ReceiverConfig::new(any_port(), Proto::Udp, clock)).unwrap();
    let log = run_sender(rx.local_addr(), Proto::Udp, &plan(&[100.0], 1.0), &SenderOptions::default(), clock).unwrap();
    settle();
    let report = rx.stop().unwrap();
    let step = &log.steps[0];
    assert_eq!(step.sent, 100);
    assert_eq!((step.first_seq, step.last_seq), (Some(0), Some(99)));
    assert!(!step.shortfall);
    let seqs: Vec<u64> = report.trace.records().iter().map(|r| r.seq).collect();
    assert_eq!(seqs, (0..100).collect::<Vec<_>>());
    assert!(report.trace.records().iter().all(|r| r.recv_time >= r.gen_time));
    assert_eq!(report.trace.clock_bias(), Some(0));
}

#[test]
fn step_boundaries_are_monotone() {
    let clock = SessionClock::new();
    let rx = run_receiver(ReceiverConfig::new(any_port(), Proto::Udp, clock)).unwrap();
    let log = run_sender(rx.local_addr(), Proto::Udp, &plan(&[50.0, 100.0, 200.0], 0.4), &SenderOptions::default(), clock).unwrap();
    let sent: Vec<u64> = log.steps.iter().map(|s| s.sent).collect();
    assert_eq!(sent, [20, 40, 80]);
    for w in log.steps.windows(2) {
        assert_eq!(w[1].first_seq.unwrap(), w[0].last_seq.unwrap() + 1);
        assert!(w[1].start_ns >= w[0].end_ns);
    }
    assert_eq!(log.total_sent(), 140);
}

#[test]
fn unreachable_rate_is_flagged() {
    let clock = SessionClock::new();
    let rx = run_receiver(ReceiverConfig::new(any_port(), Proto::Udp, clock)).unwrap();
    let log = run_sender(rx.local_addr(), Proto::Udp, &plan(&[5e6], 0.2), &SenderOptions::default(), clock).unwrap();
    assert!(log.steps[0].shortfall, "{:?}", log.steps[0]);
}

#[test]
fn malformed_datagrams_are_counted_and_skipped() {
    let clock = SessionClock::new();
    let rx = run_receiver(ReceiverConfig::new(any_port(), Proto::Udp, clock)).unwrap();
    let sock = UdpSocket::bind(any_port()).unwrap();
    let mut bad = Packet::update(7, clock.now_ns() as u64, 32).encode();
    bad[0] = b'X';
    sock.send_to(&bad, rx.local_addr()).unwrap();
    sock.send_to(b"short", rx.local_addr()).unwrap();
    sock.send_to(&Packet::update(8, clock.now_ns() as u64, 32).encode(), rx.local_addr()).unwrap();
    settle();
    assert_eq!(rx.malformed(), 2);
    let report = rx.stop().unwrap();
    assert_eq!(report.trace.len(), 1);
    assert_eq!(report.trace.records()[0].seq, 8);
}

#[test]
fn tcp_desync_resets_connection() {
    let clock = SessionClock::new();
    let rx = run_receiver(ReceiverConfig::new(any_port(), Proto::Tcp, clock)).unwrap();
    let mut s = TcpStream::connect(rx.local_addr()).unwrap();
    write_frame(&mut s, &Packet::update(0, clock.now_ns() as u64, 21).encode()).unwrap();
    write_frame(&mut s, b"garbage that is not a packet").unwrap();
    write_frame(&mut s, &Packet::update(1, clock.now_ns() as u64, 21).encode()).unwrap();
    s.flush().unwrap();
    settle();
    let report = rx.stop().unwrap();
    assert_eq!(report.resets, 1);
    assert_eq!(report.malformed, 1);
    assert_eq!(report.trace.len(), 1);
}

#[test]
fn online_statistics_snapshot() {
    let clock = SessionClock::new();
    let rx = run_receiver(ReceiverConfig::new(any_port(), Proto::Udp, clock)).unwrap();
    run_sender(rx.local_addr(), Proto::Udp, &plan(&[200.0], 0.5), &SenderOptions::default(), clock).unwrap();
    settle();
    let stats = rx.statistics().unwrap();
    assert_eq!(stats.n_records, 100);
    // about half the 5 ms spacing plus a small delay
    let avg = stats.avg_age.unwrap();
    assert!(avg > 0.002 && avg < 0.02, "{avg}");
}

#[test]
fn tcp_through_relay_is_gap_free_and_ordered() {
    let clock = SessionClock::new();
    let rx = run_receiver(ReceiverConfig::new(any_port(), Proto::Tcp, clock)).unwrap();
    let relay = run_relay(RelayConfig::new(any_port(), rx.local_addr(), Proto::Tcp, 1000.0)).unwrap();
    let log = run_sender(relay.local_addr(), Proto::Tcp, &plan(&[500.0, 3000.0], 0.5), &SenderOptions::default(), clock).unwrap();
    thread::sleep(Duration::from_secs(1));
    let relay_report = relay.stop();
    let report = rx.stop().unwrap();
    let seqs: Vec<u64> = report.trace.records().iter().map(|r| r.seq).collect();
    assert_eq!(seqs, (0..log.total_sent()).collect::<Vec<_>>());
    assert_eq!(relay_report.dropped, 0);
    // the bottleneck pushes back on the sender
    assert!(log.steps[1].shortfall);
}

#[test]
fn underloaded_relay_adds_no_queueing() {
    let clock = SessionClock::new();
    let rx = run_receiver(ReceiverConfig::new(any_port(), Proto::Udp, clock)).unwrap();
    let relay = run_relay(RelayConfig::new(any_port(), rx.local_addr(), Proto::Udp, 1000.0)).unwrap();
    run_sender(relay.local_addr(), Proto::Udp, &plan(&[100.0], 1.0), &SenderOptions::default(), clock).unwrap();
    settle();
    let r = relay.stop();
    assert_eq!(r.dropped, 0);
    assert_eq!(r.forwarded, 100);
    // one service time of 1 ms, plus scheduling noise
    assert!(r.median_queue_delay().unwrap() < 3_000_000, "{:?}", r.median_queue_delay());
}

#[test]
fn overloaded_relay_matches_simulated_queue() {
    let clock = SessionClock::new();
    let rx = run_receiver(ReceiverConfig::new(any_port(), Proto::Udp, clock)).unwrap();
    let relay = run_relay(RelayConfig::new(any_port(), rx.local_addr(), Proto::Udp, 1000.0)).unwrap();
    run_sender(relay.local_addr(), Proto::Udp, &plan(&[5000.0], 1.5), &SenderOptions::default(), clock).unwrap();
    settle();
    let r = relay.stop();
    assert!(r.dropped > 1000, "{}", r.dropped);

    let sim = aoi_sim::simulate_queue(&SimConfig {
        arrival: ArrivalProcess::Deterministic { rate: 5000.0 },
        service: ServiceProcess::Deterministic { rate: 1000.0 },
        buffer_capacity: Some(100),
        horizon: aoi_sim::Horizon::Events(7500),
        warmup_fraction: 0.0,
        ..SimConfig::mm1(1.0, 1.0, 1, 0)
    })
    .unwrap();
    let mut sim_delays: Vec<i64> = sim.log.iter().map(|s| s.departure - s.arrival).collect();
    sim_delays.sort_unstable();
    let sim_median = sim_delays[sim_delays.len() / 2];
    assert_eq!(sim_median, 101_000_000);
    let relay_median = r.median_queue_delay().unwrap();
    let rel = (relay_median - sim_median).abs() as f64 / sim_median as f64;
    assert!(rel < 0.1, "relay {relay_median} sim {sim_median}");
    let loss = r.dropped as f64 / (r.dropped + r.forwarded) as f64;
    assert!((loss - sim.loss_fraction()).abs() < 0.1, "{loss} vs {}", sim.loss_fraction());
}

#[test]
fn unbounded_relay_delay_grows_under_overload() {
    let clock = SessionClock::new();
    let rx = run_receiver(ReceiverConfig::new(any_port(), Proto::Udp, clock)).unwrap();
    let relay = run_relay(RelayConfig {
        queue_capacity: None,
        ..RelayConfig::new(any_port(), rx.local_addr(), Proto::Udp, 2000.0)
    })
    .unwrap();
    run_sender(relay.local_addr(), Proto::Udp, &plan(&[4000.0], 0.5), &SenderOptions::default(), clock).unwrap();
    thread::sleep(Duration::from_millis(800));
    let r = relay.stop();
    assert_eq!(r.dropped, 0);
    let d: Vec<i64> = r.queue_delays.iter().map(|x| x.1).collect();
    let q = d.len() / 4;
    let head = d[..q].iter().sum::<i64>() / q as i64;
    let tail = d[d.len() - q..].iter().sum::<i64>() / q as i64;
    assert!(tail > 3 * head && tail > 150_000_000, "head {head} tail {tail}");
}

#[test]
fn same_clock_offset_is_near_zero() {
    let clock = SessionClock::new();
    let rx = run_receiver(ReceiverConfig::new(any_port(), Proto::Udp, clock)).unwrap();
    let est = estimate_offset(rx.local_addr(), Proto::Udp, &ProbeConfig::default(), clock).unwrap();
    assert_eq!(est.probes_used, 10);
    assert!(est.bias_ns.unsigned_abs() <= est.min_rtt_ns / 2 + 1, "{est:?}");
}

#[test]
fn injected_offset_is_recovered_within_rtt() {
    let clock = SessionClock::new();
    let reflector = clock.with_offset(1_000_000);
    let rx = run_receiver(ReceiverConfig::new(any_port(), Proto::Udp, reflector)).unwrap();
    let relay = run_relay(RelayConfig::new(any_port(), rx.local_addr(), Proto::Udp, 1000.0)).unwrap();
    for _ in 0..5 {
        let est = estimate_offset(relay.local_addr(), Proto::Udp, &ProbeConfig::default(), clock).unwrap();
        assert!((est.bias_ns - 1_000_000).unsigned_abs() <= est.min_rtt_ns, "{est:?}");
        // each direction waits one 1 ms service time
        assert!(est.min_rtt_ns >= 2_000_000);
    }
}

#[test]
fn tcp_probes_work_too() {
    let clock = SessionClock::new();
    let rx = run_receiver(ReceiverConfig::new(any_port(), Proto::Tcp, clock.with_offset(-250_000))).unwrap();
    let est = estimate_offset(rx.local_addr(), Proto::Tcp, &ProbeConfig::default(), clock).unwrap();
    assert!((est.bias_ns + 250_000).unsigned_abs() <= est.min_rtt_ns, "{est:?}");
}

#[test]
fn receiver_corrects_by_estimated_offset() {
    let clock = SessionClock::new();
    let skewed = clock.with_offset(5_000_000);
    let probe_rx = run_receiver(ReceiverConfig::new(any_port(), Proto::Udp, skewed)).unwrap();
    let est = estimate_offset(probe_rx.local_addr(), Proto::Udp, &ProbeConfig::default(), clock).unwrap();
    drop(probe_rx);
    let rx = run_receiver(ReceiverConfig {
        offset: est,
        ..ReceiverConfig::new(any_port(), Proto::Udp, skewed)
    })
    .unwrap();
    run_sender(rx.local_addr(), Proto::Udp, &plan(&[100.0], 0.3), &SenderOptions::default(), clock).unwrap();
    settle();
    let t = rx.stop().unwrap().trace;
    assert_eq!(t.clock_bias(), Some(est.bias_ns));
    // corrected delays are loopback-small, not 5 ms
    assert!(t.records().iter().all(|r| r.delay() < 2_000_000), "{:?}", &t.records()[..3]);
}
