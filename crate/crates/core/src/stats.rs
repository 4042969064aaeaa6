use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::average::{average_of_effective, peak_of_effective, AverageMethod};
use crate::path::AgeSamplePath;
use crate::penalty::{penalty_of_effective, PenaltyFunction};
use crate::trace::{Trace, UpdateRecord};
use crate::to_secs;

/// Histogram of consecutive-loss run lengths: `run length -> occurrences`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossRuns(pub BTreeMap<u64, u64>);

impl LossRuns {
    /// Builds the histogram from gaps in the sorted, de-duplicated seq set,
    /// so reordering alone never counts as loss.
    pub fn from_records(records: &[UpdateRecord]) -> Self {
        let mut seqs: Vec<u64> = records.iter().map(|r| r.seq).collect();
        seqs.sort_unstable();
        seqs.dedup();
        let mut runs = BTreeMap::new();
        for w in seqs.windows(2) {
            let gap = w[1] - w[0] - 1;
            if gap > 0 {
                *runs.entry(gap).or_insert(0) += 1;
            }
        }
        LossRuns(runs)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total_lost(&self) -> u64 {
        self.0.iter().map(|(len, n)| len * n).sum()
    }

    pub fn max_run(&self) -> u64 {
        self.0.keys().next_back().copied().unwrap_or(0)
    }

    /// `len:count` pairs joined by `;`, as used in the statistics CSV.
    pub fn to_compact(&self) -> String {
        self.0
            .iter()
            .map(|(len, n)| format!("{len}:{n}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn parse_compact(s: &str) -> Option<Self> {
        let mut runs = BTreeMap::new();
        for part in s.split(';').filter(|p| !p.is_empty()) {
            let (len, n) = part.split_once(':')?;
            runs.insert(len.parse().ok()?, n.parse().ok()?);
        }
        Some(LossRuns(runs))
    }
}

/// Summary of one trace. Ages are in seconds; `None` marks an undefined
/// value (no effective updates or an empty window).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeStatistics {
    /// Time-average age over the observation window.
    pub avg_age: Option<f64>,
    pub peak_age: Option<f64>,
    /// Average of the penalty on `[r_0, r_N]`.
    pub avg_penalty: Option<f64>,
    pub max_age: Option<f64>,
    pub mean_delay: Option<f64>,
    pub n_records: usize,
    pub n_effective: usize,
    pub n_stale_discarded: usize,
    pub n_lost: u64,
    pub loss_runs: LossRuns,
}

impl AgeStatistics {
    pub fn loss_fraction(&self) -> f64 {
        let seen = self.n_records as u64 + self.n_lost;
        if seen == 0 {
            0.0
        } else {
            self.n_lost as f64 / seen as f64
        }
    }
}

/// Statistics with the plain-age penalty.
pub fn compute_statistics(trace: &Trace) -> AgeStatistics {
    compute_statistics_with(trace, &PenaltyFunction::identity())
}

pub fn compute_statistics_with(trace: &Trace, penalty: &PenaltyFunction) -> AgeStatistics {
    let eff = trace.effective();
    let loss_runs = LossRuns::from_records(trace.records());
    let (avg_age, peak_age, avg_penalty, max_age, mean_delay) = if eff.is_empty() {
        (None, None, None, None, None)
    } else {
        let path = AgeSamplePath::from_effective(&eff);
        let delays: f64 = eff.records().iter().map(|r| to_secs(r.delay())).sum();
        (
            average_of_effective(&eff, AverageMethod::Geometric).ok(),
            peak_of_effective(&eff).ok(),
            penalty_of_effective(&eff, penalty).ok(),
            Some(to_secs(path.max_age())),
            Some(delays / eff.len() as f64),
        )
    };
    AgeStatistics {
        avg_age,
        peak_age,
        avg_penalty,
        max_age,
        mean_delay,
        n_records: trace.len(),
        n_effective: eff.len(),
        n_stale_discarded: eff.n_stale_discarded(),
        n_lost: loss_runs.total_lost(),
        loss_runs,
    }
}
