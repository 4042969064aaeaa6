//! In-path bottleneck: a FCFS queue drained at a fixed packet rate.
//!
//! Both directions get their own queue with the same parameters, so probe
//! round trips see a symmetric path. UDP arrivals beyond the queue capacity
//! are dropped; TCP arrivals block instead, pushing the backlog back into
//! the sender's socket.
//!
//! The relay serves one client at a time: over UDP replies go to the most
//! recent source address, over TCP each accepted connection gets its own
//! upstream connection.

use std::io::{self, Read};
use std::net::{SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Receiver, RecvTimeoutError, SendTimeoutError, Sender, TrySendError};
use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use socket2::{Domain, Socket, Type};

use aoi_core::Nanos;

use crate::link::{is_timeout, unspecified_for, Proto};
use crate::wire::{write_frame, FrameDecoder, Packet, MAX_FRAME};
use crate::{NetError, Result};

const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DropPolicy {
    /// Drop only when the queue is full.
    TailDrop,
    /// Also drop at random before the queue fills. The probability rises
    /// linearly from 0 at smoothed utilization `onset` to `max_prob` at
    /// utilization 1 and above; utilization is the smoothed offered rate
    /// over the service rate. Tail drop still applies.
    EarlyRandom { onset: f64, max_prob: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelayConfig {
    pub listen: SocketAddr,
    pub upstream: SocketAddr,
    pub proto: Proto,
    /// Packets per second.
    pub service_rate: f64,
    /// Waiting room excluding the packet in service; `None` is unbounded.
    pub queue_capacity: Option<usize>,
    pub drop_policy: DropPolicy,
    pub seed: u64,
    /// Kernel buffer size for TCP sockets; `None` keeps the OS default.
    pub tcp_buffer: Option<usize>,
}

impl RelayConfig {
    pub fn new(listen: SocketAddr, upstream: SocketAddr, proto: Proto, service_rate: f64) -> Self {
        Self {
            listen,
            upstream,
            proto,
            service_rate,
            queue_capacity: Some(100),
            drop_policy: DropPolicy::TailDrop,
            seed: 0,
            tcp_buffer: Some(4096),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.service_rate > 0.0 && self.service_rate.is_finite()) {
            return Err(NetError::Config(format!(
                "service rate must be positive, got {}",
                self.service_rate
            )));
        }
        if let DropPolicy::EarlyRandom { onset, max_prob } = self.drop_policy {
            if !(0.0..1.0).contains(&onset) || !(0.0..=1.0).contains(&max_prob) {
                return Err(NetError::Config(format!(
                    "early-random drop needs onset in [0,1) and max_prob in [0,1], got {onset}, {max_prob}"
                )));
            }
        }
        Ok(())
    }
}

/// Forward-direction accounting. Queue delay runs from intake to departure.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelayReport {
    pub forwarded: u64,
    pub dropped: u64,
    pub dropped_seqs: Vec<u64>,
    /// `(seq, queue delay ns)` of forwarded updates.
    pub queue_delays: Vec<(u64, Nanos)>,
    pub reverse_forwarded: u64,
    pub reverse_dropped: u64,
}

impl RelayReport {
    pub fn median_queue_delay(&self) -> Option<Nanos> {
        let mut d: Vec<Nanos> = self.queue_delays.iter().map(|x| x.1).collect();
        if d.is_empty() {
            return None;
        }
        d.sort_unstable();
        Some(d[d.len() / 2])
    }
}

pub struct RelayHandle {
    local_addr: SocketAddr,
    report: Arc<Mutex<RelayReport>>,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl RelayHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn report(&self) -> RelayReport {
        self.report.lock().unwrap().clone()
    }

    pub fn stop(mut self) -> RelayReport {
        self.shutdown();
        self.report()
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for RelayHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

struct Item {
    bytes: Vec<u8>,
    arrived: Instant,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Reverse,
}

/// Admission control in front of one queue.
struct Admission {
    policy: DropPolicy,
    service_rate: f64,
    rng: ChaCha8Rng,
    last: Option<Instant>,
    mean_gap: f64,
}

/// Weight of the newest inter-arrival gap in the smoothed mean.
const GAP_WEIGHT: f64 = 0.01;

impl Admission {
    fn new(policy: DropPolicy, service_rate: f64, seed: u64) -> Self {
        Self {
            policy,
            service_rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
            last: None,
            mean_gap: f64::INFINITY,
        }
    }

    fn utilization(&self) -> f64 {
        1.0 / (self.mean_gap * self.service_rate)
    }

    /// True to admit; updates the rate estimate either way.
    fn admit(&mut self, now: Instant) -> bool {
        if let Some(last) = self.last {
            let gap = (now - last).as_secs_f64();
            self.mean_gap = if self.mean_gap.is_finite() {
                (1.0 - GAP_WEIGHT) * self.mean_gap + GAP_WEIGHT * gap
            } else {
                gap
            };
        }
        self.last = Some(now);
        match self.policy {
            DropPolicy::TailDrop => true,
            DropPolicy::EarlyRandom { onset, max_prob } => {
                let excess = ((self.utilization() - onset) / (1.0 - onset)).clamp(0.0, 1.0);
                self.rng.random::<f64>() >= max_prob * excess
            }
        }
    }
}

fn seq_of(bytes: &[u8]) -> Option<u64> {
    Packet::decode(bytes).ok().map(|p| p.seq)
}

fn record_drop(report: &Mutex<RelayReport>, dir: Direction, bytes: &[u8]) {
    let mut r = report.lock().unwrap();
    match dir {
        Direction::Forward => {
            r.dropped += 1;
            if let Some(seq) = seq_of(bytes) {
                r.dropped_seqs.push(seq);
            }
        }
        Direction::Reverse => r.reverse_dropped += 1,
    }
}

fn channel(capacity: Option<usize>) -> (Sender<Item>, Receiver<Item>) {
    match capacity {
        Some(c) => bounded(c),
        None => unbounded(),
    }
}

/// Drains `rx` at `service_rate`. Service of an item starts when it arrived
/// or when the previous one departed, whichever is later; departures are
/// scheduled on that ideal timeline so oversleeping never erodes throughput.
fn serve(
    rx: Receiver<Item>,
    service_rate: f64,
    dir: Direction,
    report: Arc<Mutex<RelayReport>>,
    stop: Arc<AtomicBool>,
    mut sink: impl FnMut(&[u8]) -> io::Result<()>,
) {
    let service = Duration::from_secs_f64(1.0 / service_rate);
    let mut free_at: Option<Instant> = None;
    while !stop.load(Ordering::Relaxed) {
        let item = match rx.recv_timeout(POLL) {
            Ok(item) => item,
            Err(RecvTimeoutError::Timeout) => continue,
            Err(RecvTimeoutError::Disconnected) => break,
        };
        let start = free_at.map_or(item.arrived, |f| f.max(item.arrived));
        let departure = start + service;
        let now = Instant::now();
        if departure > now {
            thread::sleep(departure - now);
        }
        free_at = Some(departure);
        if let Err(e) = sink(&item.bytes) {
            debug!("relay send failed: {e}");
            if dir == Direction::Forward && e.kind() != io::ErrorKind::ConnectionRefused {
                break;
            }
            continue;
        }
        let mut r = report.lock().unwrap();
        match dir {
            Direction::Forward => {
                r.forwarded += 1;
                if let Some(seq) = seq_of(&item.bytes) {
                    let delay = Instant::now().saturating_duration_since(item.arrived);
                    r.queue_delays.push((seq, delay.as_nanos() as Nanos));
                }
            }
            Direction::Reverse => r.reverse_forwarded += 1,
        }
    }
}

/// Starts a relay on `config.listen` forwarding to `config.upstream`.
pub fn run_relay(config: RelayConfig) -> Result<RelayHandle> {
    config.validate()?;
    let report = Arc::new(Mutex::new(RelayReport::default()));
    let stop = Arc::new(AtomicBool::new(false));
    let (local_addr, threads) = match config.proto {
        Proto::Udp => start_udp(&config, &report, &stop)?,
        Proto::Tcp => start_tcp(&config, &report, &stop)?,
    };
    Ok(RelayHandle {
        local_addr,
        report,
        stop,
        threads,
    })
}

fn start_udp(
    config: &RelayConfig,
    report: &Arc<Mutex<RelayReport>>,
    stop: &Arc<AtomicBool>,
) -> Result<(SocketAddr, Vec<JoinHandle<()>>)> {
    let front = UdpSocket::bind(config.listen)?;
    front.set_read_timeout(Some(POLL))?;
    let local = front.local_addr()?;
    let back = UdpSocket::bind(unspecified_for(&config.upstream))?;
    back.connect(config.upstream)?;
    back.set_read_timeout(Some(POLL))?;
    let client: Arc<Mutex<Option<SocketAddr>>> = Arc::new(Mutex::new(None));

    let mut threads = Vec::new();
    let (fwd_tx, fwd_rx) = channel(config.queue_capacity);
    let (rev_tx, rev_rx) = channel(config.queue_capacity);

    // client -> queue
    {
        let (sock, client, report, stop) = (front.try_clone()?, client.clone(), report.clone(), stop.clone());
        let mut adm = Admission::new(config.drop_policy, config.service_rate, config.seed);
        threads.push(spawn("aoi-relay-in", move || {
            let mut buf = vec![0u8; MAX_FRAME];
            while !stop.load(Ordering::Relaxed) {
                match sock.recv_from(&mut buf) {
                    Ok((n, src)) => {
                        let arrived = Instant::now();
                        *client.lock().unwrap() = Some(src);
                        udp_enqueue(&fwd_tx, &mut adm, &buf[..n], arrived, Direction::Forward, &report);
                    }
                    Err(e) if is_timeout(&e) || e.kind() == io::ErrorKind::ConnectionRefused => {}
                    Err(e) => warn!("relay receive failed: {e}"),
                }
            }
        })?);
    }
    // queue -> upstream
    {
        let (sock, report, stop) = (back.try_clone()?, report.clone(), stop.clone());
        let rate = config.service_rate;
        threads.push(spawn("aoi-relay-fwd", move || {
            serve(fwd_rx, rate, Direction::Forward, report, stop, |b| sock.send(b).map(|_| ()))
        })?);
    }
    // upstream -> reverse queue
    {
        let (sock, report, stop) = (back, report.clone(), stop.clone());
        let mut adm = Admission::new(config.drop_policy, config.service_rate, config.seed ^ 0x5EED);
        threads.push(spawn("aoi-relay-back-in", move || {
            let mut buf = vec![0u8; MAX_FRAME];
            while !stop.load(Ordering::Relaxed) {
                match sock.recv(&mut buf) {
                    Ok(n) => {
                        let arrived = Instant::now();
                        udp_enqueue(&rev_tx, &mut adm, &buf[..n], arrived, Direction::Reverse, &report);
                    }
                    Err(e) if is_timeout(&e) || e.kind() == io::ErrorKind::ConnectionRefused => {}
                    Err(e) => warn!("relay upstream receive failed: {e}"),
                }
            }
        })?);
    }
    // reverse queue -> client
    {
        let (sock, client, report, stop) = (front, client, report.clone(), stop.clone());
        let rate = config.service_rate;
        threads.push(spawn("aoi-relay-rev", move || {
            serve(rev_rx, rate, Direction::Reverse, report, stop, |b| {
                match *client.lock().unwrap() {
                    Some(dst) => sock.send_to(b, dst).map(|_| ()),
                    None => Ok(()),
                }
            })
        })?);
    }
    Ok((local, threads))
}

fn udp_enqueue(
    tx: &Sender<Item>,
    adm: &mut Admission,
    bytes: &[u8],
    arrived: Instant,
    dir: Direction,
    report: &Mutex<RelayReport>,
) {
    if !adm.admit(arrived) {
        record_drop(report, dir, bytes);
        return;
    }
    let item = Item {
        bytes: bytes.to_vec(),
        arrived,
    };
    match tx.try_send(item) {
        Ok(()) => {}
        Err(TrySendError::Full(item)) => record_drop(report, dir, &item.bytes),
        Err(TrySendError::Disconnected(_)) => {}
    }
}

fn spawn(name: &str, f: impl FnOnce() + Send + 'static) -> io::Result<JoinHandle<()>> {
    thread::Builder::new().name(name.into()).spawn(f)
}

fn tcp_listener(addr: SocketAddr, buffer: Option<usize>) -> io::Result<TcpListener> {
    let sock = Socket::new(Domain::for_address(addr), Type::STREAM, None)?;
    sock.set_reuse_address(true)?;
    if let Some(b) = buffer {
        // inherited by accepted connections
        sock.set_recv_buffer_size(b)?;
        sock.set_send_buffer_size(b)?;
    }
    sock.bind(&addr.into())?;
    sock.listen(16)?;
    Ok(sock.into())
}

fn tcp_connect(addr: SocketAddr, buffer: Option<usize>) -> io::Result<TcpStream> {
    let sock = Socket::new(Domain::for_address(addr), Type::STREAM, None)?;
    if let Some(b) = buffer {
        sock.set_recv_buffer_size(b)?;
        sock.set_send_buffer_size(b)?;
    }
    sock.connect(&addr.into())?;
    let stream: TcpStream = sock.into();
    stream.set_nodelay(true)?;
    Ok(stream)
}

fn start_tcp(
    config: &RelayConfig,
    report: &Arc<Mutex<RelayReport>>,
    stop: &Arc<AtomicBool>,
) -> Result<(SocketAddr, Vec<JoinHandle<()>>)> {
    let listener = tcp_listener(config.listen, config.tcp_buffer)?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let (config, report, stop) = (*config, report.clone(), stop.clone());
    let acceptor = spawn("aoi-relay-accept", move || {
        let mut sessions: Vec<JoinHandle<()>> = Vec::new();
        while !stop.load(Ordering::Relaxed) {
            match listener.accept() {
                Ok((client, peer)) => {
                    debug!("relay accepted {peer}");
                    match tcp_session(client, &config, &report, &stop) {
                        Ok(ts) => sessions.extend(ts),
                        Err(e) => warn!("relay session for {peer} failed: {e}"),
                    }
                }
                Err(e) if is_timeout(&e) => thread::sleep(POLL),
                Err(e) => {
                    warn!("relay accept failed: {e}");
                    thread::sleep(POLL);
                }
            }
        }
        for s in sessions {
            let _ = s.join();
        }
    })?;
    Ok((local, vec![acceptor]))
}

/// Four loops per connection: intake and service in each direction.
fn tcp_session(
    client: TcpStream,
    config: &RelayConfig,
    report: &Arc<Mutex<RelayReport>>,
    stop: &Arc<AtomicBool>,
) -> io::Result<Vec<JoinHandle<()>>> {
    client.set_nonblocking(false)?;
    client.set_nodelay(true)?;
    let upstream = tcp_connect(config.upstream, config.tcp_buffer)?;
    let (fwd_tx, fwd_rx) = channel(config.queue_capacity);
    let (rev_tx, rev_rx) = channel(config.queue_capacity);
    let rate = config.service_rate;

    let mut threads = Vec::new();
    {
        let (src, stop) = (client.try_clone()?, stop.clone());
        threads.push(spawn("aoi-relay-tcp-in", move || tcp_intake(src, fwd_tx, &stop))?);
    }
    {
        let (mut dst, report, stop) = (upstream.try_clone()?, report.clone(), stop.clone());
        threads.push(spawn("aoi-relay-tcp-fwd", move || {
            serve(fwd_rx, rate, Direction::Forward, report, stop, |b| write_frame(&mut dst, b));
            let _ = dst.shutdown(std::net::Shutdown::Write);
        })?);
    }
    {
        let (src, stop) = (upstream, stop.clone());
        threads.push(spawn("aoi-relay-tcp-back-in", move || tcp_intake(src, rev_tx, &stop))?);
    }
    {
        let (mut dst, report, stop) = (client, report.clone(), stop.clone());
        threads.push(spawn("aoi-relay-tcp-rev", move || {
            serve(rev_rx, rate, Direction::Reverse, report, stop, |b| write_frame(&mut dst, b))
        })?);
    }
    Ok(threads)
}

/// Reads frames and blocks while the queue is full. Returning drops the
/// sender side of the queue, which lets the service loop drain and finish.
fn tcp_intake(mut src: TcpStream, tx: Sender<Item>, stop: &AtomicBool) {
    if let Err(e) = src.set_read_timeout(Some(POLL)) {
        warn!("relay intake setup failed: {e}");
        return;
    }
    let mut decoder = FrameDecoder::default();
    let mut chunk = vec![0u8; 16 * 1024];
    while !stop.load(Ordering::Relaxed) {
        let n = match src.read(&mut chunk) {
            Ok(0) => return,
            Ok(n) => n,
            Err(e) if is_timeout(&e) => continue,
            Err(e) => {
                debug!("relay intake closed: {e}");
                return;
            }
        };
        let arrived = Instant::now();
        decoder.push(&chunk[..n]);
        while let Some(frame) = decoder.next_frame() {
            let mut item = Item {
                bytes: frame.to_vec(),
                arrived,
            };
            loop {
                match tx.send_timeout(item, POLL) {
                    Ok(()) => break,
                    Err(SendTimeoutError::Timeout(back)) => {
                        if stop.load(Ordering::Relaxed) {
                            return;
                        }
                        item = back;
                    }
                    Err(SendTimeoutError::Disconnected(_)) => return,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_random_idle_below_onset() {
        let mut adm = Admission::new(DropPolicy::EarlyRandom { onset: 0.5, max_prob: 1.0 }, 1000.0, 1);
        let t0 = Instant::now();
        // 100 pkt/s offered, utilization 0.1
        assert!((0..500).all(|k| adm.admit(t0 + Duration::from_millis(10 * k))));
    }

    #[test]
    fn early_random_drops_at_overload() {
        let mut adm = Admission::new(DropPolicy::EarlyRandom { onset: 0.5, max_prob: 0.5 }, 1000.0, 1);
        let t0 = Instant::now();
        let dropped = (0..10_000u64)
            .filter(|&k| !adm.admit(t0 + Duration::from_micros(500 * k)))
            .count();
        // utilization 2 saturates at max_prob
        assert!((4_000..6_000).contains(&dropped), "{dropped}");
        assert!((adm.utilization() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn tail_drop_admits_everything() {
        let mut adm = Admission::new(DropPolicy::TailDrop, 1.0, 1);
        let t0 = Instant::now();
        assert!((0..100).all(|k| adm.admit(t0 + Duration::from_micros(k))));
    }

    #[test]
    fn rejects_bad_config() {
        let a: SocketAddr = "127.0.0.1:0".parse().unwrap();
        let mut c = RelayConfig::new(a, a, Proto::Udp, 0.0);
        assert!(c.validate().is_err());
        c.service_rate = 10.0;
        c.drop_policy = DropPolicy::EarlyRandom { onset: 1.0, max_prob: 0.1 };
        assert!(c.validate().is_err());
    }
}
