use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{AoiError, Result};
use crate::Nanos;

/// One status update: generated at `gen_time` (sender clock) and received
/// at `recv_time` (receiver clock).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub seq: u64,
    pub gen_time: Nanos,
    pub recv_time: Nanos,
}

impl UpdateRecord {
    pub fn new(seq: u64, gen_time: Nanos, recv_time: Nanos) -> Self {
        Self {
            seq,
            gen_time,
            recv_time,
        }
    }

    /// System time `r - s`.
    pub fn delay(&self) -> Nanos {
        self.recv_time - self.gen_time
    }
}

/// Optional observation metadata. Missing fields are filled from the
/// records, see [`Trace::new`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub observe_start: Option<Nanos>,
    pub observe_end: Option<Nanos>,
    pub initial_age: Option<Nanos>,
    /// Offset correction already applied to the reception stamps, if any.
    pub clock_bias: Option<Nanos>,
}

/// Reception-ordered list of updates observed over `[observe_start, observe_end]`.
///
/// The age at `observe_start` is `initial_age`. It is modelled as a virtual
/// predecessor update generated at `observe_start - initial_age` and
/// received at `observe_start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    records: Vec<UpdateRecord>,
    initial_age: Nanos,
    observe_start: Nanos,
    observe_end: Nanos,
    clock_bias: Option<Nanos>,
}

impl Trace {
    /// Builds a trace, sorting records by reception time (ties by seq).
    ///
    /// Defaults: the window spans first to last reception and the initial
    /// age equals the delay of the first record. An empty trace without a
    /// window is anchored at zero.
    pub fn new(mut records: Vec<UpdateRecord>, meta: TraceMeta) -> Result<Self> {
        records.sort_by_key(|r| (r.recv_time, r.seq));
        let first = records.first().copied();
        let last = records.last().copied();

        let observe_start = meta
            .observe_start
            .or(first.map(|r| r.recv_time))
            .unwrap_or(0);
        let observe_end = meta
            .observe_end
            .or(last.map(|r| r.recv_time))
            .unwrap_or(observe_start);
        let initial_age = meta
            .initial_age
            .or(first.map(|r| r.delay()))
            .unwrap_or(0);

        if let Some(first) = first {
            if first.recv_time < observe_start {
                return Err(AoiError::InvalidTrace(format!(
                    "observe_start {observe_start} is after first reception {}",
                    first.recv_time
                )));
            }
        }
        if let Some(last) = last {
            if last.recv_time > observe_end {
                return Err(AoiError::InvalidTrace(format!(
                    "observe_end {observe_end} is before last reception {}",
                    last.recv_time
                )));
            }
        }
        if observe_end < observe_start {
            return Err(AoiError::InvalidTrace(format!(
                "observe_end {observe_end} precedes observe_start {observe_start}"
            )));
        }

        Ok(Self {
            records,
            initial_age,
            observe_start,
            observe_end,
            clock_bias: meta.clock_bias,
        })
    }

    pub fn from_records(records: Vec<UpdateRecord>) -> Result<Self> {
        Self::new(records, TraceMeta::default())
    }

    /// Convenience constructor from `(gen, recv)` pairs; seq numbers are the
    /// pair indices.
    pub fn from_pairs(pairs: &[(Nanos, Nanos)], meta: TraceMeta) -> Result<Self> {
        let records = pairs
            .iter()
            .enumerate()
            .map(|(i, &(s, r))| UpdateRecord::new(i as u64, s, r))
            .collect();
        Self::new(records, meta)
    }

    pub fn records(&self) -> &[UpdateRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn initial_age(&self) -> Nanos {
        self.initial_age
    }

    pub fn observe_start(&self) -> Nanos {
        self.observe_start
    }

    pub fn observe_end(&self) -> Nanos {
        self.observe_end
    }

    pub fn clock_bias(&self) -> Option<Nanos> {
        self.clock_bias
    }

    pub fn meta(&self) -> TraceMeta {
        TraceMeta {
            observe_start: Some(self.observe_start),
            observe_end: Some(self.observe_end),
            initial_age: Some(self.initial_age),
            clock_bias: self.clock_bias,
        }
    }

    /// Generation time of the virtual predecessor, `s_0`.
    pub fn initial_gen_time(&self) -> Nanos {
        self.observe_start - self.initial_age
    }

    /// `N(T)`: number of records received by `t`.
    pub fn count_received_by(&self, t: Nanos) -> usize {
        self.records.partition_point(|r| r.recv_time <= t)
    }

    pub fn effective(&self) -> EffectiveTrace {
        effective_trace(self)
    }

    /// Same trace with a different observation end (must cover the last
    /// reception).
    pub fn with_observe_end(&self, observe_end: Nanos) -> Result<Self> {
        let mut meta = self.meta();
        meta.observe_end = Some(observe_end);
        Self::new(self.records.clone(), meta)
    }

    /// Sub-trace of the records whose seq lies in `range`.
    ///
    /// The sub-trace starts at the reception of the last effective update
    /// received before the range, so its first interval is the real one.
    /// Returns `None` when no effective update falls in the range.
    pub fn slice_seq(&self, range: RangeInclusive<u64>) -> Option<Trace> {
        let eff = self.effective();
        let idx = eff
            .records()
            .iter()
            .position(|r| range.contains(&r.seq))?;
        let first = eff.records()[idx];
        let (observe_start, initial_age) = match idx.checked_sub(1) {
            Some(p) => {
                let pred = eff.records()[p];
                (pred.recv_time, pred.delay())
            }
            None => (self.observe_start, self.initial_age),
        };
        let records: Vec<_> = self
            .records
            .iter()
            .filter(|r| range.contains(&r.seq) && r.recv_time >= first.recv_time)
            .copied()
            .collect();
        let observe_end = records.iter().map(|r| r.recv_time).max()?;
        Trace::new(
            records,
            TraceMeta {
                observe_start: Some(observe_start),
                observe_end: Some(observe_end),
                initial_age: Some(initial_age),
                clock_bias: self.clock_bias,
            },
        )
        .ok()
    }

    pub(crate) fn with_records(&self, records: Vec<UpdateRecord>) -> Self {
        Self {
            records,
            ..self.clone()
        }
    }

    pub(crate) fn shifted(&self, bias: Nanos) -> Self {
        Self {
            records: self
                .records
                .iter()
                .map(|r| UpdateRecord {
                    recv_time: r.recv_time + bias,
                    ..*r
                })
                .collect(),
            initial_age: self.initial_age + bias,
            observe_start: self.observe_start + bias,
            observe_end: self.observe_end + bias,
            clock_bias: self.clock_bias,
        }
    }
}

/// A trace with every stale update removed: each remaining record is
/// strictly fresher than anything the receiver held before it.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveTrace {
    trace: Trace,
    n_stale: usize,
}

/// One inter-reception interval `(r_{i-1}, r_i]` of an effective trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub prev_gen: Nanos,
    pub prev_recv: Nanos,
    pub gen: Nanos,
    pub recv: Nanos,
}

impl Interval {
    /// `β = r_{i-1} - s_{i-1}`, the age right after the previous reception.
    pub fn beta(&self) -> Nanos {
        self.prev_recv - self.prev_gen
    }

    /// `θ = r_i - s_{i-1}`, the age right before this reception (the peak).
    pub fn theta(&self) -> Nanos {
        self.recv - self.prev_gen
    }

    /// `X_i = s_i - s_{i-1}`.
    pub fn inter_generation(&self) -> Nanos {
        self.gen - self.prev_gen
    }

    /// `r_i - r_{i-1}`.
    pub fn inter_departure(&self) -> Nanos {
        self.recv - self.prev_recv
    }

    /// `Y_i = r_i - s_i`.
    pub fn system_time(&self) -> Nanos {
        self.recv - self.gen
    }
}

/// Drops stale updates.
///
/// A record is kept iff its generation time strictly exceeds that of every
/// record received before it and is not older than the initial state.
pub fn effective_trace(trace: &Trace) -> EffectiveTrace {
    let mut newest = trace.initial_gen_time();
    let mut kept = Vec::with_capacity(trace.len());
    let mut n_stale = 0;
    for r in trace.records() {
        let fresher = match kept.last() {
            Some(_) => r.gen_time > newest,
            None => r.gen_time >= newest,
        };
        if fresher {
            newest = r.gen_time;
            kept.push(*r);
        } else {
            n_stale += 1;
        }
    }
    EffectiveTrace {
        trace: trace.with_records(kept),
        n_stale,
    }
}

impl EffectiveTrace {
    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn records(&self) -> &[UpdateRecord] {
        self.trace.records()
    }

    pub fn len(&self) -> usize {
        self.trace.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trace.is_empty()
    }

    pub fn n_stale_discarded(&self) -> usize {
        self.n_stale
    }

    /// Intervals `i = 1..=N`, the first one starting at the virtual
    /// predecessor.
    pub fn intervals(&self) -> impl Iterator<Item = Interval> + '_ {
        let mut prev = (self.trace.initial_gen_time(), self.trace.observe_start());
        self.records().iter().map(move |r| {
            let iv = Interval {
                prev_gen: prev.0,
                prev_recv: prev.1,
                gen: r.gen_time,
                recv: r.recv_time,
            };
            prev = (r.gen_time, r.recv_time);
            iv
        })
    }

    /// `r_N - r_0`, the horizon of the Q/H-form averages.
    pub fn horizon(&self) -> Nanos {
        self.records()
            .last()
            .map_or(0, |r| r.recv_time - self.trace.observe_start())
    }

    /// Stale filtering commutes with a constant reception shift, so the
    /// shifted trace stays effective.
    pub(crate) fn shifted(&self, bias: Nanos) -> EffectiveTrace {
        EffectiveTrace {
            trace: self.trace.shifted(bias),
            n_stale: self.n_stale,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(start: Nanos, end: Nanos, age: Nanos) -> TraceMeta {
        TraceMeta {
            observe_start: Some(start),
            observe_end: Some(end),
            initial_age: Some(age),
            clock_bias: None,
        }
    }

    fn gen_recv(et: &EffectiveTrace) -> Vec<(Nanos, Nanos)> {
        et.records()
            .iter()
            .map(|r| (r.gen_time, r.recv_time))
            .collect()
    }

    #[test]
    fn out_of_order_update_is_discarded() {
        let t = Trace::from_pairs(&[(0, 10), (20, 30), (10, 35)], window(0, 40, 10)).unwrap();
        let et = t.effective();
        assert_eq!(gen_recv(&et), vec![(0, 10), (20, 30)]);
        assert_eq!(et.n_stale_discarded(), 1);
    }

    #[test]
    fn monotone_trace_is_untouched() {
        let t = Trace::from_pairs(&[(0, 1), (1, 2), (2, 3)], window(0, 3, 1)).unwrap();
        let et = t.effective();
        assert_eq!(et.records(), t.records());
        assert_eq!(et.n_stale_discarded(), 0);
    }

    #[test]
    fn equal_generation_time_keeps_first() {
        let t = Trace::from_pairs(&[(5, 6), (5, 7)], window(0, 7, 1)).unwrap();
        let et = t.effective();
        assert_eq!(gen_recv(&et), vec![(5, 6)]);
        assert_eq!(et.n_stale_discarded(), 1);
    }

    #[test]
    fn older_than_initial_state_is_stale() {
        // s_0 = 10 - 4 = 6
        let t = Trace::from_pairs(&[(3, 12), (8, 14)], window(10, 20, 4)).unwrap();
        let et = t.effective();
        assert_eq!(gen_recv(&et), vec![(8, 14)]);
    }

    #[test]
    fn empty_trace_is_valid() {
        let t = Trace::from_records(vec![]).unwrap();
        let et = t.effective();
        assert!(et.is_empty());
        assert_eq!(et.n_stale_discarded(), 0);
        assert_eq!(et.horizon(), 0);
    }

    #[test]
    fn defaults_anchor_on_first_record() {
        let t = Trace::from_pairs(&[(100, 130), (200, 240)], TraceMeta::default()).unwrap();
        assert_eq!(t.observe_start(), 130);
        assert_eq!(t.observe_end(), 240);
        assert_eq!(t.initial_age(), 30);
        assert_eq!(t.effective().len(), 2);
    }

    #[test]
    fn ties_in_reception_follow_seq_order() {
        let recs = vec![UpdateRecord::new(2, 5, 10), UpdateRecord::new(1, 4, 10)];
        let t = Trace::new(recs, window(0, 10, 1)).unwrap();
        assert_eq!(t.records()[0].seq, 1);
        // seq 1 (gen 4) first, then seq 2 (gen 5) is fresher
        assert_eq!(t.effective().len(), 2);
    }

    #[test]
    fn rejects_window_not_covering_records() {
        assert!(Trace::from_pairs(&[(0, 5)], window(6, 10, 1)).is_err());
        assert!(Trace::from_pairs(&[(0, 5)], window(0, 4, 1)).is_err());
    }

    #[test]
    fn count_received_by_matches_definition() {
        let t = Trace::from_pairs(&[(0, 1), (2, 3), (4, 5)], window(0, 6, 1)).unwrap();
        assert_eq!(t.count_received_by(0), 0);
        assert_eq!(t.count_received_by(3), 2);
        assert_eq!(t.count_received_by(6), 3);
    }

    #[test]
    fn intervals_start_at_virtual_predecessor() {
        let t = Trace::from_pairs(&[(0, 1), (2, 3)], window(0, 4, 1)).unwrap();
        let ivs: Vec<_> = t.effective().intervals().collect();
        assert_eq!(ivs[0].prev_gen, -1);
        assert_eq!(ivs[0].beta(), 1);
        assert_eq!(ivs[0].theta(), 2);
        assert_eq!(ivs[1].beta(), 1);
        assert_eq!(ivs[1].theta(), 3);
        assert_eq!(ivs[1].inter_departure(), 2);
    }

    #[test]
    fn slice_anchors_on_previous_effective_record() {
        let pairs: Vec<_> = (0..10).map(|i| (i * 10, i * 10 + 3)).collect();
        let t = Trace::from_pairs(&pairs, TraceMeta::default()).unwrap();
        let sub = t.slice_seq(4..=6).unwrap();
        assert_eq!(sub.observe_start(), 33);
        assert_eq!(sub.initial_age(), 3);
        assert_eq!(sub.len(), 3);
        assert_eq!(sub.observe_end(), 63);
        assert!(t.slice_seq(100..=200).is_none());
    }
}
