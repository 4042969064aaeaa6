use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use aoi_core::Nanos;

/// Nanoseconds since the Unix epoch, read once from the wall clock and then
/// advanced by a monotonic clock, so a session never sees wall-clock steps.
///
/// Copies share the same anchor. `offset` is added to every reading and
/// lets tests inject a known clock bias.
#[derive(Debug, Clone, Copy)]
pub struct SessionClock {
    anchor: Instant,
    anchor_ns: Nanos,
    offset: Nanos,
}

impl SessionClock {
    pub fn new() -> Self {
        let anchor = Instant::now();
        let wall = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or(Duration::ZERO);
        Self {
            anchor,
            anchor_ns: wall.as_nanos() as Nanos,
            offset: 0,
        }
    }

    /// Same anchor, readings shifted by `offset` ns.
    pub fn with_offset(self, offset: Nanos) -> Self {
        Self {
            offset: self.offset + offset,
            ..self
        }
    }

    pub fn offset(&self) -> Nanos {
        self.offset
    }

    pub fn now_ns(&self) -> Nanos {
        self.at(Instant::now())
    }

    pub fn at(&self, instant: Instant) -> Nanos {
        // saturating_duration_since keeps instants before the anchor at it
        self.anchor_ns + instant.saturating_duration_since(self.anchor).as_nanos() as Nanos + self.offset
    }
}

impl Default for SessionClock {
    fn default() -> Self {
        Self::new()
    }
}
