//! Live status-update measurement over TCP and UDP.
//!
//! A paced [`sender`] emits `UPDATE` packets, a timestamping [`receiver`]
//! turns them into an [`aoi_core::Trace`] and also answers clock probes,
//! [`probe`] estimates the receiver-minus-sender clock offset, and the
//! [`relay`] sits in the path as a rate-limited FCFS bottleneck. The
//! [`regions`] classifier labels receiver-time windows, and [`sweep`]
//! wires everything together on loopback.

pub mod clock;
mod error;
mod link;
pub mod probe;
pub mod receiver;
pub mod regions;
pub mod relay;
pub mod sender;
pub mod sweep;
pub mod wire;

pub use clock::SessionClock;
pub use error::{NetError, Result};
pub use link::Proto;
pub use probe::{estimate_from_samples, estimate_offset, OffsetEstimate, OffsetMode, ProbeConfig, ProbeSample};
pub use receiver::{run_receiver, ReceiverConfig, ReceiverHandle, ReceiverReport};
pub use regions::{classify_regions, majority_label, Classification, Evidence, Region, RegionConfig, RegionLabel};
pub use relay::{run_relay, DropPolicy, RelayConfig, RelayHandle, RelayReport};
pub use sender::{run_sender, RatePlan, RateStep, SendLog, SenderOptions, StepReport};
pub use sweep::{run_sweep, write_sweep_csv, NetSweepConfig, NetSweepResult, NetStepResult, NET_SWEEP_HEADER};
pub use wire::{Packet, PacketType, WireError};
