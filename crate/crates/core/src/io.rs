//! Text formats.
//!
//! Trace CSV:
//!
//! ```text
//! # observe_start_ns=0
//! # initial_age_ns=1000000000
//! seq,gen_ns,recv_ns
//! 0,0,1000000000
//! ```
//!
//! Comment lines may carry `observe_start_ns`, `observe_end_ns`,
//! `initial_age_ns` and `clock_bias_ns` as `key=value`; other comments are
//! ignored. Statistics are written as CSV or JSON lines and the sample path
//! as `t_ns,age_ns` rows.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{AoiError, Result};
use crate::path::{AgeSamplePath, Breakpoint};
use crate::stats::{AgeStatistics, LossRuns};
use crate::trace::{Trace, TraceMeta, UpdateRecord};
use crate::Nanos;

pub const TRACE_HEADER: &str = "seq,gen_ns,recv_ns";
pub const PATH_HEADER: &str = "t_ns,age_ns";
pub const STATS_HEADER: &str = "avg_age_s,peak_age_s,avg_penalty,max_age_s,mean_delay_s,\
n_records,n_effective,n_stale_discarded,n_lost,loss_runs";

fn parse_err(line: usize, message: impl Into<String>) -> AoiError {
    AoiError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_field<T: std::str::FromStr>(line: usize, name: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| parse_err(line, format!("invalid {name} '{}'", raw.trim())))
}

pub fn read_trace<R: Read>(reader: R) -> Result<Trace> {
    let mut meta = TraceMeta::default();
    let mut records = Vec::new();
    let mut seen_header = false;

    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                let slot = match key.trim() {
                    "observe_start_ns" => &mut meta.observe_start,
                    "observe_end_ns" => &mut meta.observe_end,
                    "initial_age_ns" => &mut meta.initial_age,
                    "clock_bias_ns" => &mut meta.clock_bias,
                    _ => continue,
                };
                *slot = Some(parse_field::<Nanos>(lineno, key.trim(), value)?);
            }
            continue;
        }
        if !seen_header {
            if line.trim() != TRACE_HEADER {
                return Err(parse_err(
                    lineno,
                    format!("expected header '{TRACE_HEADER}', found '{line}'"),
                ));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                lineno,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        }
        records.push(UpdateRecord {
            seq: parse_field(lineno, "seq", fields[0])?,
            gen_time: parse_field(lineno, "gen_ns", fields[1])?,
            recv_time: parse_field(lineno, "recv_ns", fields[2])?,
        });
    }
    if !seen_header {
        return Err(parse_err(1, "missing header"));
    }
    Trace::new(records, meta)
}

pub fn read_trace_file(path: impl AsRef<Path>) -> Result<Trace> {
    read_trace(File::open(path)?)
}

pub fn write_trace<W: Write>(trace: &Trace, mut out: W) -> Result<()> {
    writeln!(out, "# observe_start_ns={}", trace.observe_start())?;
    writeln!(out, "# observe_end_ns={}", trace.observe_end())?;
    writeln!(out, "# initial_age_ns={}", trace.initial_age())?;
    if let Some(b) = trace.clock_bias() {
        writeln!(out, "# clock_bias_ns={b}")?;
    }
    writeln!(out, "{TRACE_HEADER}")?;
    for r in trace.records() {
        writeln!(out, "{},{},{}", r.seq, r.gen_time, r.recv_time)?;
    }
    Ok(())
}

pub fn write_trace_file(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_trace(trace, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_sample_path<W: Write>(path: &AgeSamplePath, mut out: W) -> Result<()> {
    writeln!(out, "{PATH_HEADER}")?;
    for b in path.breakpoints() {
        writeln!(out, "{},{}", b.t, b.age)?;
    }
    Ok(())
}

pub fn read_sample_path<R: Read>(reader: R) -> Result<Vec<Breakpoint>> {
    let mut points = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if idx == 0 {
            if line.trim() != PATH_HEADER {
                return Err(parse_err(lineno, "bad sample-path header"));
            }
            continue;
        }
        let (t, age) = line
            .split_once(',')
            .ok_or_else(|| parse_err(lineno, "expected 2 fields"))?;
        points.push(Breakpoint {
            t: parse_field(lineno, "t_ns", t)?,
            age: parse_field(lineno, "age_ns", age)?,
        });
    }
    Ok(points)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

pub fn write_statistics_csv<W: Write>(stats: &AgeStatistics, mut out: W) -> Result<()> {
    writeln!(out, "{STATS_HEADER}")?;
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{}",
        opt(stats.avg_age),
        opt(stats.peak_age),
        opt(stats.avg_penalty),
        opt(stats.max_age),
        opt(stats.mean_delay),
        stats.n_records,
        stats.n_effective,
        stats.n_stale_discarded,
        stats.n_lost,
        stats.loss_runs.to_compact()
    )?;
    Ok(())
}

pub fn read_statistics_csv<R: Read>(reader: R) -> Result<AgeStatistics> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != STATS_HEADER {
        return Err(parse_err(1, "bad statistics header"));
    }
    let row = lines
        .next()
        .transpose()?
        .ok_or_else(|| parse_err(2, "missing statistics row"))?;
    let f: Vec<&str> = row.split(',').collect();
    if f.len() != 10 {
        return Err(parse_err(2, format!("expected 10 fields, found {}", f.len())));
    }
    let of = |i: usize, name: &str| -> Result<Option<f64>> {
        if f[i].is_empty() {
            Ok(None)
        } else {
            parse_field(2, name, f[i]).map(Some)
        }
    };
    Ok(AgeStatistics {
        avg_age: of(0, "avg_age_s")?,
        peak_age: of(1, "peak_age_s")?,
        avg_penalty: of(2, "avg_penalty")?,
        max_age: of(3, "max_age_s")?,
        mean_delay: of(4, "mean_delay_s")?,
        n_records: parse_field(2, "n_records", f[5])?,
        n_effective: parse_field(2, "n_effective", f[6])?,
        n_stale_discarded: parse_field(2, "n_stale_discarded", f[7])?,
        n_lost: parse_field(2, "n_lost", f[8])?,
        loss_runs: LossRuns::parse_compact(f[9]).ok_or_else(|| parse_err(2, "bad loss_runs"))?,
    })
}

pub fn write_statistics_jsonl<W: Write>(stats: &AgeStatistics, mut out: W) -> Result<()> {
    let line = serde_json::to_string(stats).map_err(|e| AoiError::Io(e.to_string()))?;
    writeln!(out, "{line}")?;
    Ok(())
}
