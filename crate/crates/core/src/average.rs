use serde::{Deserialize, Serialize};

use crate::error::{AoiError, Result};
use crate::path::AgeSamplePath;
use crate::trace::{EffectiveTrace, Trace};
use crate::to_secs;

/// How the time-average age is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AverageMethod {
    /// Trapezoidal integration of the sawtooth over the whole observation
    /// window, including the tail after the last reception.
    Geometric,
    /// Polygon `Q_1`, trapezoids `Q_i` and the closing triangle `Y_N²/2`,
    /// over `[r_0, r_N]`.
    QForm,
    /// Per-interval areas `H_i` over `[r_0, r_N]`.
    HForm,
}

/// Per-interval area terms of an effective trace, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaDecomposition {
    /// `Q_1` (polygon), then `Q_i = ½(2r_i − s_i − s_{i−1})(s_i − s_{i−1})`.
    pub q_terms: Vec<f64>,
    /// `Y_N²/2`, the triangle under the last trapezoid.
    pub closing_triangle: f64,
    /// `H_i = (r_i − r_{i−1})(r_{i−1} − s_{i−1}) + (r_i − r_{i−1})²/2`.
    pub h_terms: Vec<f64>,
    /// `(β_i, θ_i)`.
    pub interval_terms: Vec<(f64, f64)>,
    /// `r_N − r_0`.
    pub horizon: f64,
}

impl AreaDecomposition {
    pub fn q_area(&self) -> f64 {
        self.q_terms.iter().sum::<f64>() + self.closing_triangle
    }

    pub fn h_area(&self) -> f64 {
        self.h_terms.iter().sum()
    }
}

pub fn area_decomposition(eff: &EffectiveTrace) -> AreaDecomposition {
    let initial_age = to_secs(eff.trace().initial_age());
    let mut q_terms = Vec::with_capacity(eff.len());
    let mut h_terms = Vec::with_capacity(eff.len());
    let mut interval_terms = Vec::with_capacity(eff.len());
    let mut last_system_time = initial_age;

    for (i, iv) in eff.intervals().enumerate() {
        // Times relative to s_{i-1} keep the products well-conditioned.
        let x = to_secs(iv.inter_generation());
        let r_rel = to_secs(iv.theta());
        let trapezoid = 0.5 * (2.0 * r_rel - x) * x;
        q_terms.push(if i == 0 {
            trapezoid - 0.5 * initial_age * initial_age
        } else {
            trapezoid
        });

        let d = to_secs(iv.inter_departure());
        let y_prev = to_secs(iv.beta());
        h_terms.push(d * y_prev + 0.5 * d * d);

        interval_terms.push((y_prev, r_rel));
        last_system_time = to_secs(iv.system_time());
    }

    let closing_triangle = if q_terms.is_empty() {
        0.0
    } else {
        0.5 * last_system_time * last_system_time
    };

    AreaDecomposition {
        q_terms,
        closing_triangle,
        h_terms,
        interval_terms,
        horizon: to_secs(eff.horizon()),
    }
}

/// Time-average age in seconds.
pub fn time_average_age(trace: &Trace, method: AverageMethod) -> Result<f64> {
    average_of_effective(&trace.effective(), method)
}

pub(crate) fn average_of_effective(eff: &EffectiveTrace, method: AverageMethod) -> Result<f64> {
    if eff.is_empty() {
        return Err(AoiError::NoEffectiveUpdates);
    }
    match method {
        AverageMethod::Geometric => {
            let t = eff.trace();
            let len = t.observe_end() - t.observe_start();
            if len <= 0 {
                return Err(AoiError::NonPositiveHorizon(len));
            }
            let path = AgeSamplePath::from_effective(eff);
            Ok(path.area_between(t.observe_start(), t.observe_end()) / to_secs(len))
        }
        AverageMethod::QForm | AverageMethod::HForm => {
            let horizon = eff.horizon();
            if horizon <= 0 {
                return Err(AoiError::NonPositiveHorizon(horizon));
            }
            let decomposition = area_decomposition(eff);
            let area = if method == AverageMethod::QForm {
                decomposition.q_area()
            } else {
                decomposition.h_area()
            };
            Ok(area / to_secs(horizon))
        }
    }
}

/// Average peak age `(1/N) Σ (r_i − s_{i−1})` in seconds.
pub fn peak_average_age(trace: &Trace) -> Result<f64> {
    peak_of_effective(&trace.effective())
}

pub(crate) fn peak_of_effective(eff: &EffectiveTrace) -> Result<f64> {
    if eff.is_empty() {
        return Err(AoiError::NoEffectiveUpdates);
    }
    let sum: f64 = eff.intervals().map(|iv| to_secs(iv.theta())).sum();
    Ok(sum / eff.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{from_secs, Nanos, TraceMeta};

    fn secs_trace(pairs: &[(f64, f64)], start: f64, end: f64, age: f64) -> Trace {
        let pairs: Vec<(Nanos, Nanos)> = pairs
            .iter()
            .map(|&(s, r)| (from_secs(s), from_secs(r)))
            .collect();
        Trace::from_pairs(
            &pairs,
            TraceMeta {
                observe_start: Some(from_secs(start)),
                observe_end: Some(from_secs(end)),
                initial_age: Some(from_secs(age)),
                clock_bias: None,
            },
        )
        .unwrap()
    }

    fn golden() -> Trace {
        secs_trace(&[(0.0, 1.0), (2.0, 3.0)], 0.0, 3.0, 1.0)
    }

    #[test]
    fn golden_trace_all_methods_agree() {
        let t = golden();
        let d = area_decomposition(&t.effective());
        assert_eq!(d.h_terms, vec![1.5, 4.0]);
        // Q_1 polygon = 1.5 - ½·1², Q_2 = 4, closing triangle ½·1²
        assert_eq!(d.q_terms, vec![1.0, 4.0]);
        assert_eq!(d.closing_triangle, 0.5);
        for m in [AverageMethod::Geometric, AverageMethod::QForm, AverageMethod::HForm] {
            let avg = time_average_age(&t, m).unwrap();
            assert!((avg - 5.5 / 3.0).abs() < 1e-12, "{m:?} {avg}");
        }
    }

    #[test]
    fn geometric_includes_tail() {
        let t = golden().with_observe_end(from_secs(4.0)).unwrap();
        let avg = time_average_age(&t, AverageMethod::Geometric).unwrap();
        assert!((avg - 1.75).abs() < 1e-12);
        // Q/H forms stay on [r_0, r_N]
        let h = time_average_age(&t, AverageMethod::HForm).unwrap();
        assert!((h - 5.5 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn unit_zero_delay_sawtooth_averages_half() {
        let pairs: Vec<_> = (0..=10).map(|i| (i as f64, i as f64)).collect();
        let t = secs_trace(&pairs, 0.0, 10.0, 1.0);
        for m in [AverageMethod::Geometric, AverageMethod::QForm, AverageMethod::HForm] {
            assert!((time_average_age(&t, m).unwrap() - 0.5).abs() < 1e-12);
        }
        assert!((peak_average_age(&t).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn q_and_h_agree_when_first_and_last_delays_differ() {
        // Y_0 = 0.5, Y_N = 2.0: the bare trapezoid sum would be off by ½(Y_N² − Y_0²)
        let t = secs_trace(&[(0.0, 1.5), (1.0, 3.0)], 0.0, 3.0, 0.5);
        let q = time_average_age(&t, AverageMethod::QForm).unwrap();
        let h = time_average_age(&t, AverageMethod::HForm).unwrap();
        let g = time_average_age(&t, AverageMethod::Geometric).unwrap();
        assert!((q - h).abs() < 1e-12);
        assert!((g - h).abs() < 1e-12);
    }

    #[test]
    fn peak_average_examples() {
        assert!((peak_average_age(&golden()).unwrap() - 2.5).abs() < 1e-12);
        let single = secs_trace(&[(0.0, 5.0)], 0.0, 5.0, 1.0);
        assert!((peak_average_age(&single).unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn peak_matches_pre_jump_values() {
        let t = golden();
        let path = crate::sample_path(&t);
        let bps = path.breakpoints();
        let peaks: Vec<f64> = bps
            .windows(2)
            .filter(|w| w[0].t == w[1].t && w[1].age < w[0].age)
            .map(|w| to_secs(w[0].age))
            .collect();
        let mean = peaks.iter().sum::<f64>() / peaks.len() as f64;
        assert!((peak_average_age(&t).unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn peak_can_fall_below_time_average() {
        // one long gap followed by many short ones
        let mut pairs = vec![(100.0, 100.0)];
        for k in 1..=10 {
            let t = 100.0 + k as f64 * 0.001;
            pairs.push((t, t));
        }
        let t = secs_trace(&pairs, 0.0, 100.01, 0.0);
        let avg = time_average_age(&t, AverageMethod::HForm).unwrap();
        let peak = peak_average_age(&t).unwrap();
        assert!(peak < avg, "peak {peak} avg {avg}");
    }

    #[test]
    fn empty_and_degenerate_horizons_are_errors() {
        let empty = secs_trace(&[], 0.0, 1.0, 1.0);
        assert_eq!(
            time_average_age(&empty, AverageMethod::HForm),
            Err(AoiError::NoEffectiveUpdates)
        );
        assert_eq!(peak_average_age(&empty), Err(AoiError::NoEffectiveUpdates));
        let instant = secs_trace(&[(0.0, 0.0)], 0.0, 0.0, 1.0);
        assert!(matches!(
            time_average_age(&instant, AverageMethod::QForm),
            Err(AoiError::NonPositiveHorizon(0))
        ));
        assert!(matches!(
            time_average_age(&instant, AverageMethod::Geometric),
            Err(AoiError::NonPositiveHorizon(0))
        ));
    }
}
