//! Timestamping receiver. It also reflects `PROBE`s so the same endpoint
//! serves clock-offset estimation.

use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use aoi_core::{compute_statistics, AgeStatistics, Nanos, Trace, TraceMeta, UpdateRecord};
use log::{debug, warn};

use crate::clock::SessionClock;
use crate::link::{is_timeout, Proto};
use crate::probe::OffsetEstimate;
use crate::wire::{write_frame, FrameDecoder, Packet, PacketType, MAX_FRAME};
use crate::Result;

const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, Copy)]
pub struct ReceiverConfig {
    pub listen: SocketAddr,
    pub proto: Proto,
    /// Reception stamps are corrected by `−bias_ns`.
    pub offset: OffsetEstimate,
    pub clock: SessionClock,
}

impl ReceiverConfig {
    pub fn new(listen: SocketAddr, proto: Proto, clock: SessionClock) -> Self {
        Self {
            listen,
            proto,
            offset: OffsetEstimate::default(),
            clock,
        }
    }
}

#[derive(Debug, Default)]
struct State {
    records: Vec<UpdateRecord>,
    malformed: u64,
    resets: u64,
    probes_answered: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverReport {
    pub trace: Trace,
    pub malformed: u64,
    pub resets: u64,
    pub probes_answered: u64,
}

pub struct ReceiverHandle {
    local_addr: SocketAddr,
    bias: Nanos,
    state: Arc<Mutex<State>>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ReceiverHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn received(&self) -> usize {
        self.state.lock().unwrap().records.len()
    }

    pub fn malformed(&self) -> u64 {
        self.state.lock().unwrap().malformed
    }

    /// Trace of everything received so far, in arrival order.
    pub fn snapshot(&self) -> Result<Trace> {
        let records = self.state.lock().unwrap().records.clone();
        make_trace(records, self.bias)
    }

    pub fn statistics(&self) -> Result<AgeStatistics> {
        Ok(compute_statistics(&self.snapshot()?))
    }

    pub fn stop(mut self) -> Result<ReceiverReport> {
        self.shutdown();
        let mut st = self.state.lock().unwrap();
        let records = std::mem::take(&mut st.records);
        Ok(ReceiverReport {
            trace: make_trace(records, self.bias)?,
            malformed: st.malformed,
            resets: st.resets,
            probes_answered: st.probes_answered,
        })
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ReceiverHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn make_trace(records: Vec<UpdateRecord>, bias: Nanos) -> Result<Trace> {
    Ok(Trace::new(
        records,
        TraceMeta {
            clock_bias: Some(bias),
            ..TraceMeta::default()
        },
    )?)
}

/// What to send back after handling one datagram or frame.
enum Action {
    None,
    Reply(Vec<u8>),
    Malformed,
}

fn handle(bytes: &[u8], now: Nanos, bias: Nanos, state: &Mutex<State>) -> Action {
    match Packet::decode(bytes) {
        Ok(p) => match p.ptype {
            PacketType::Update => {
                let rec = UpdateRecord::new(p.seq, p.gen_ns as Nanos, now - bias);
                state.lock().unwrap().records.push(rec);
                Action::None
            }
            PacketType::Probe => {
                state.lock().unwrap().probes_answered += 1;
                Action::Reply(Packet::echo(&p, now as u64).encode())
            }
            PacketType::ProbeEcho => Action::None,
        },
        Err(e) => {
            debug!("malformed packet: {e}");
            state.lock().unwrap().malformed += 1;
            Action::Malformed
        }
    }
}

/// Binds `config.listen` and starts receiving on a background thread.
pub fn run_receiver(config: ReceiverConfig) -> Result<ReceiverHandle> {
    let state = Arc::new(Mutex::new(State::default()));
    let stop = Arc::new(AtomicBool::new(false));
    let bias = config.offset.bias_ns;
    let (local_addr, thread) = match config.proto {
        Proto::Udp => {
            let sock = UdpSocket::bind(config.listen)?;
            sock.set_read_timeout(Some(POLL))?;
            let addr = sock.local_addr()?;
            let (state, stop) = (state.clone(), stop.clone());
            let t = thread::Builder::new()
                .name("aoi-recv-udp".into())
                .spawn(move || udp_loop(sock, config.clock, bias, &state, &stop))?;
            (addr, t)
        }
        Proto::Tcp => {
            let listener = TcpListener::bind(config.listen)?;
            listener.set_nonblocking(true)?;
            let addr = listener.local_addr()?;
            let (state, stop) = (state.clone(), stop.clone());
            let t = thread::Builder::new()
                .name("aoi-recv-tcp".into())
                .spawn(move || accept_loop(listener, config.clock, bias, state, stop))?;
            (addr, t)
        }
    };
    Ok(ReceiverHandle {
        local_addr,
        bias,
        state,
        stop,
        thread: Some(thread),
    })
}

fn udp_loop(sock: UdpSocket, clock: SessionClock, bias: Nanos, state: &Mutex<State>, stop: &AtomicBool) {
    let mut buf = vec![0u8; MAX_FRAME];
    while !stop.load(Ordering::Relaxed) {
        match sock.recv_from(&mut buf) {
            Ok((n, src)) => {
                let now = clock.now_ns();
                if let Action::Reply(reply) = handle(&buf[..n], now, bias, state) {
                    if let Err(e) = sock.send_to(&reply, src) {
                        warn!("echo to {src} failed: {e}");
                    }
                }
            }
            Err(e) if is_timeout(&e) => {}
            // ICMP errors from earlier sends surface here on some platforms
            Err(e) if e.kind() == ErrorKind::ConnectionRefused => {}
            Err(e) => warn!("udp receive failed: {e}"),
        }
    }
}

fn accept_loop(
    listener: TcpListener,
    clock: SessionClock,
    bias: Nanos,
    state: Arc<Mutex<State>>,
    stop: Arc<AtomicBool>,
) {
    let mut conns = Vec::new();
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                debug!("accepted {peer}");
                let (state, stop) = (state.clone(), stop.clone());
                conns.push(thread::spawn(move || {
                    if let Err(e) = tcp_conn(stream, clock, bias, &state, &stop) {
                        warn!("connection from {peer}: {e}");
                    }
                }));
            }
            Err(e) if is_timeout(&e) => thread::sleep(POLL),
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
    }
    for c in conns {
        let _ = c.join();
    }
}

fn tcp_conn(
    mut stream: TcpStream,
    clock: SessionClock,
    bias: Nanos,
    state: &Mutex<State>,
    stop: &AtomicBool,
) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(POLL))?;
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    let mut decoder = FrameDecoder::default();
    let mut chunk = vec![0u8; 64 * 1024];
    while !stop.load(Ordering::Relaxed) {
        let n = match stream.read(&mut chunk) {
            Ok(0) => return Ok(()),
            Ok(n) => n,
            Err(e) if is_timeout(&e) => continue,
            Err(e) => return Err(e),
        };
        let now = clock.now_ns();
        decoder.push(&chunk[..n]);
        while let Some(frame) = decoder.next_frame() {
            match handle(frame, now, bias, state) {
                Action::Reply(reply) => write_frame(&mut writer, &reply)?,
                Action::Malformed => {
                    // framing is lost; nothing after this point can be trusted
                    state.lock().unwrap().resets += 1;
                    let _ = writer.flush();
                    return Ok(());
                }
                Action::None => {}
            }
        }
    }
    Ok(())
}
