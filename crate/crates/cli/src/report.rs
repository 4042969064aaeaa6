use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use aoi_core::io::{write_sample_path, write_statistics_csv, write_statistics_jsonl, write_trace};
use aoi_core::{sample_path, AgeStatistics, Trace};
use aoi_net::RegionLabel;
use serde::{Deserialize, Serialize};

use crate::args::Args;

pub const REGIONS_HEADER: &str =
    "start_seq,end_seq,start_ns,end_ns,label,received,lost,loss_rate,max_loss_run,delay_ratio,delay_level_ns,avg_age_s";

/// Collects output files of one run under its directory.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    pub fn new(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn write(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        f(&mut w)?;
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn trace(&mut self, name: &str, trace: &Trace) -> Result<()> {
        self.write(name, |w| Ok(write_trace(trace, w)?))
    }

    pub fn statistics(&mut self, stats: &AgeStatistics) -> Result<()> {
        self.write("stats.csv", |w| Ok(write_statistics_csv(stats, w)?))?;
        self.write("stats.jsonl", |w| Ok(write_statistics_jsonl(stats, w)?))
    }

    pub fn sample_path(&mut self, trace: &Trace) -> Result<()> {
        let path = sample_path(trace);
        self.write("sample_path.csv", |w| Ok(write_sample_path(&path, w)?))
    }

    pub fn regions(&mut self, labels: &[RegionLabel]) -> Result<()> {
        self.write("regions.csv", |w| {
            writeln!(w, "{REGIONS_HEADER}")?;
            for l in labels {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    l.window.0,
                    l.window.1,
                    l.start_ns,
                    l.end_ns,
                    l.label,
                    l.received,
                    l.lost,
                    l.evidence.loss_rate,
                    l.evidence.max_loss_run,
                    l.evidence.delay_ratio,
                    l.evidence.delay_level_ns,
                    l.avg_age.map(|a| a.to_string()).unwrap_or_default()
                )?;
            }
            Ok(())
        })
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub args: Args,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(args: &Args, outputs: &[String]) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: args.seed,
            args: args.clone(),
            outputs: outputs.to_vec(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}
