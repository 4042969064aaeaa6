use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use aoi_core::{compute_statistics, peak_average_age, time_average_age, AverageMethod};

use crate::config::SimConfig;
use crate::queue::simulate_queue;
use crate::rng::run_seed;
use crate::{Result, SimError};

pub const SWEEP_HEADER: &str = "lambda,avg_age,peak_age,loss_fraction,mean_delay";

/// Per-rate means over independent runs. Ages and delays in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub rate: f64,
    pub load: f64,
    pub avg_age: f64,
    pub peak_age: f64,
    pub loss_fraction: f64,
    pub mean_delay: f64,
    pub unstable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub seeds_per_point: usize,
}

impl SweepResult {
    /// Index of the point with the lowest average age.
    pub fn argmin(&self) -> Option<usize> {
        self.points
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.avg_age.total_cmp(&b.1.avg_age))
            .map(|(i, _)| i)
    }
}

struct Run {
    avg_age: f64,
    peak_age: f64,
    loss_fraction: f64,
    mean_delay: f64,
    unstable: bool,
}

fn one_run(config: &SimConfig) -> Result<Run> {
    let out = simulate_queue(config)?;
    let stats = compute_statistics(&out.trace);
    Ok(Run {
        avg_age: time_average_age(&out.trace, AverageMethod::HForm)?,
        peak_age: peak_average_age(&out.trace)?,
        loss_fraction: out.loss_fraction(),
        mean_delay: stats.mean_delay.unwrap_or(f64::NAN),
        unstable: out.unstable,
    })
}

/// Simulates every rate with `seeds` runs each. Run `k` uses the seed
/// derived from `(base.seed, k)` at every rate, so points share random
/// numbers across the grid.
pub fn load_sweep(base: &SimConfig, rates: &[f64], seeds: usize) -> Result<SweepResult> {
    if rates.is_empty() {
        return Err(SimError::EmptyRates);
    }
    if seeds == 0 {
        return Err(SimError::InvalidConfig("seeds per point must be positive".into()));
    }
    let mut rates = rates.to_vec();
    rates.sort_by(f64::total_cmp);
    for &r in &rates {
        base.with_arrival_rate(r).validate()?;
    }

    let jobs: Vec<(usize, u64)> = (0..rates.len())
        .flat_map(|i| (0..seeds as u64).map(move |k| (i, k)))
        .collect();
    let runs: Vec<Run> = jobs
        .par_iter()
        .map(|&(i, k)| {
            let config = base.with_arrival_rate(rates[i]).with_seed(run_seed(base.seed, k));
            one_run(&config)
        })
        .collect::<Result<_>>()?;

    let n = seeds as f64;
    let points = rates
        .iter()
        .zip(runs.chunks(seeds))
        .map(|(&rate, chunk)| {
            let mean = |g: fn(&Run) -> f64| chunk.iter().map(g).sum::<f64>() / n;
            SweepPoint {
                rate,
                load: rate / base.service.rate(),
                avg_age: mean(|r| r.avg_age),
                peak_age: mean(|r| r.peak_age),
                loss_fraction: mean(|r| r.loss_fraction),
                mean_delay: mean(|r| r.mean_delay),
                unstable: chunk.iter().any(|r| r.unstable),
            }
        })
        .collect();
    Ok(SweepResult {
        points,
        seeds_per_point: seeds,
    })
}

pub fn write_sweep_csv<W: Write>(result: &SweepResult, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for p in &result.points {
        writeln!(
            out,
            "{},{},{},{},{}",
            p.rate, p.avg_age, p.peak_age, p.loss_fraction, p.mean_delay
        )?;
    }
    Ok(())
}
