//! Operating-region labels for receiver-time windows.
//!
//! Per window: the loss rate and longest loss run come from seq gaps, and
//! the delay level is the median delay, compared against a baseline level.
//!
//! * Panicked: longest run ≥ `panicked_min_run`, or delay level ≥
//!   `panicked_delay_ratio` × baseline.
//! * Relaxed: loss rate < `relaxed_max_loss` and delay level <
//!   `relaxed_delay_ratio` × baseline.
//! * Busy: everything else.

use std::time::Duration;

use aoi_core::{peak_average_age, time_average_age, AverageMethod, Nanos, Trace};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    Relaxed,
    Busy,
    Panicked,
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Region::Relaxed => "relaxed",
            Region::Busy => "busy",
            Region::Panicked => "panicked",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionConfig {
    pub window: Duration,
    pub relaxed_max_loss: f64,
    pub panicked_min_run: u64,
    pub relaxed_delay_ratio: f64,
    pub panicked_delay_ratio: f64,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self {
            window: Duration::from_secs(1),
            relaxed_max_loss: 0.001,
            panicked_min_run: 3,
            relaxed_delay_ratio: 1.5,
            panicked_delay_ratio: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub loss_rate: f64,
    pub max_loss_run: u64,
    pub delay_ratio: f64,
    pub delay_level_ns: Nanos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionLabel {
    pub label: Region,
    /// Lowest and highest seq received in the window.
    pub window: (u64, u64),
    pub start_ns: Nanos,
    pub end_ns: Nanos,
    pub received: usize,
    pub lost: u64,
    pub evidence: Evidence,
    /// Time-average and peak age of the window, in seconds.
    pub avg_age: Option<f64>,
    pub peak_age: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub labels: Vec<RegionLabel>,
    pub baseline_ns: Nanos,
    /// No low-loss window existed; the baseline is the global median.
    pub baseline_fallback: bool,
}

struct Window {
    start_ns: Nanos,
    delays: Vec<Nanos>,
    lo: u64,
    hi: u64,
    lost: u64,
    max_run: u64,
}

impl Window {
    fn loss_rate(&self) -> f64 {
        self.lost as f64 / (self.lost + self.delays.len() as u64) as f64
    }
}

fn median(v: &mut [Nanos]) -> Nanos {
    v.sort_unstable();
    v[v.len() / 2]
}

/// Labels every non-empty window of `config.window` receiver time, starting
/// at the first reception. A gap in seq numbers is charged to the window
/// of the reception that reveals it; late (reordered) packets are not loss.
pub fn classify_regions(trace: &Trace, config: &RegionConfig) -> Classification {
    let width = (config.window.as_nanos() as Nanos).max(1);
    let records = trace.records();
    let Some(first) = records.first() else {
        return Classification {
            labels: Vec::new(),
            baseline_ns: 0,
            baseline_fallback: true,
        };
    };
    let t0 = first.recv_time;

    let mut received: Vec<u64> = records.iter().map(|r| r.seq).collect();
    received.sort_unstable();
    received.dedup();

    let mut windows: Vec<Window> = Vec::new();
    let mut newest: Option<u64> = None;
    for r in records {
        let start_ns = t0 + (r.recv_time - t0) / width * width;
        if windows.last().is_none_or(|w| w.start_ns != start_ns) {
            windows.push(Window {
                start_ns,
                delays: Vec::new(),
                lo: r.seq,
                hi: r.seq,
                lost: 0,
                max_run: 0,
            });
        }
        let w = windows.last_mut().unwrap();
        if let Some(n) = newest {
            if r.seq > n + 1 {
                // packets of the gap that show up later are only reordered
                let from = received.partition_point(|&s| s <= n);
                let to = received.partition_point(|&s| s < r.seq);
                let mut prev = n;
                for &s in received[from..to].iter().chain(std::iter::once(&r.seq)) {
                    let run = s - prev - 1;
                    if run > 0 {
                        w.lost += run;
                        w.max_run = w.max_run.max(run);
                    }
                    prev = s;
                }
            }
        }
        newest = Some(newest.map_or(r.seq, |n| n.max(r.seq)));
        w.lo = w.lo.min(r.seq);
        w.hi = w.hi.max(r.seq);
        w.delays.push(r.delay());
    }

    let (baseline_ns, baseline_fallback) = match windows
        .iter()
        .find(|w| w.loss_rate() < config.relaxed_max_loss)
    {
        Some(w) => (median(&mut w.delays.clone()), false),
        None => {
            let mut all: Vec<Nanos> = records.iter().map(|r| r.delay()).collect();
            (median(&mut all), true)
        }
    };
    let base = baseline_ns.max(1) as f64;

    let labels = windows
        .into_iter()
        .map(|mut w| {
            let level = median(&mut w.delays);
            let ratio = level as f64 / base;
            let loss_rate = w.loss_rate();
            let label = if w.max_run >= config.panicked_min_run || ratio >= config.panicked_delay_ratio {
                Region::Panicked
            } else if loss_rate < config.relaxed_max_loss && ratio < config.relaxed_delay_ratio {
                Region::Relaxed
            } else {
                Region::Busy
            };
            let sub = trace.slice_seq(w.lo..=w.hi);
            RegionLabel {
                label,
                window: (w.lo, w.hi),
                start_ns: w.start_ns,
                end_ns: w.start_ns + width,
                received: w.delays.len(),
                lost: w.lost,
                evidence: Evidence {
                    loss_rate,
                    max_loss_run: w.max_run,
                    delay_ratio: ratio,
                    delay_level_ns: level,
                },
                avg_age: sub
                    .as_ref()
                    .and_then(|t| time_average_age(t, AverageMethod::HForm).ok()),
                peak_age: sub.as_ref().and_then(|t| peak_average_age(t).ok()),
            }
        })
        .collect();

    Classification {
        labels,
        baseline_ns,
        baseline_fallback,
    }
}

/// Most frequent label; ties go to the more severe one.
pub fn majority_label(labels: impl IntoIterator<Item = Region>) -> Option<Region> {
    let mut counts = [0usize; 3];
    for l in labels {
        counts[l as usize] += 1;
    }
    // max_by_key keeps the last maximum, so order by rising severity
    [Region::Relaxed, Region::Busy, Region::Panicked]
        .into_iter()
        .filter(|&r| counts[r as usize] > 0)
        .max_by_key(|&r| counts[r as usize])
}

#[cfg(test)]
mod tests {
    use super::*;
    use aoi_core::UpdateRecord;

    const MS: Nanos = 1_000_000;

    /// One packet per ms; `delay(i)` gives the delay of seq `i`, `None` drops it.
    fn trace(n: u64, delay: impl Fn(u64) -> Option<Nanos>) -> Trace {
        let recs = (0..n)
            .filter_map(|i| {
                delay(i).map(|d| UpdateRecord::new(i, i as Nanos * MS, i as Nanos * MS + d))
            })
            .collect();
        Trace::from_records(recs).unwrap()
    }

    fn labels(t: &Trace) -> Vec<Region> {
        classify_regions(t, &RegionConfig::default()).labels.iter().map(|l| l.label).collect()
    }

    #[test]
    fn flat_and_contiguous_is_relaxed() {
        let t = trace(3000, |_| Some(2 * MS));
        assert_eq!(labels(&t), [Region::Relaxed; 3]);
        let c = classify_regions(&t, &RegionConfig::default());
        assert_eq!(c.baseline_ns, 2 * MS);
        assert!(!c.baseline_fallback);
        assert_eq!(c.labels[0].window, (0, 999));
        let age = c.labels[1].avg_age.unwrap();
        assert!((age - 0.0025).abs() < 1e-9, "{age}");
    }

    #[test]
    fn isolated_short_gaps_are_busy() {
        // second window loses pairs, never three in a row
        let t = trace(3000, |i| {
            if (1000..2000).contains(&i) && i % 100 < 2 {
                None
            } else {
                Some(2 * MS)
            }
        });
        assert_eq!(labels(&t), [Region::Relaxed, Region::Busy, Region::Relaxed]);
    }

    #[test]
    fn long_run_and_doubled_delay_is_panicked() {
        let t = trace(3000, |i| match i {
            1000..=1049 => None,
            1050.. => Some(4 * MS),
            _ => Some(2 * MS),
        });
        let c = classify_regions(&t, &RegionConfig::default());
        let l: Vec<Region> = c.labels.iter().map(|l| l.label).collect();
        assert_eq!(l[0], Region::Relaxed);
        assert!(l[1..].iter().all(|&r| r == Region::Panicked));
        assert_eq!(c.labels[1].evidence.max_loss_run, 50);
        assert!((c.labels[2].evidence.delay_ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn intermediate_delay_without_loss_is_busy() {
        let t = trace(2000, |i| Some(if i < 1000 { 2 * MS } else { 3 * MS + MS / 2 }));
        assert_eq!(labels(&t), [Region::Relaxed, Region::Busy, Region::Busy]);
    }

    #[test]
    fn reordering_is_not_loss() {
        // every tenth packet is overtaken by its successor
        let t = trace(1000, |i| Some(if i % 10 == 0 { 3 * MS + MS / 2 } else { 2 * MS }));
        assert!(t.records().windows(2).any(|w| w[1].seq < w[0].seq));
        let c = classify_regions(&t, &RegionConfig::default());
        assert!(c.labels.iter().all(|l| l.lost == 0));
        let gapped = trace(1000, |i| (i != 500 && i != 501 && i != 503).then_some(2 * MS));
        let c = classify_regions(&gapped, &RegionConfig::default());
        assert_eq!(c.labels[0].lost, 3);
        assert_eq!(c.labels[0].evidence.max_loss_run, 2);
    }

    #[test]
    fn no_low_loss_window_falls_back() {
        let t = trace(2000, |i| (i % 2 == 0).then_some(MS));
        let c = classify_regions(&t, &RegionConfig::default());
        assert!(c.baseline_fallback);
        assert_eq!(c.baseline_ns, MS);
        assert!(c.labels.iter().all(|l| l.label == Region::Busy));
    }

    #[test]
    fn empty_trace_has_no_windows() {
        let c = classify_regions(&Trace::from_records(vec![]).unwrap(), &RegionConfig::default());
        assert!(c.labels.is_empty());
    }

    #[test]
    fn majority_ties_go_to_severe() {
        use Region::*;
        assert_eq!(majority_label([Relaxed, Busy]), Some(Busy));
        assert_eq!(majority_label([Relaxed, Relaxed, Panicked]), Some(Relaxed));
        assert_eq!(majority_label([Busy, Panicked, Panicked, Busy]), Some(Panicked));
        assert_eq!(majority_label([]), None);
    }
}
