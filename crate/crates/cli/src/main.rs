//! `aoi`: measurement sessions, simulations, sweeps and trace analysis.

mod args;
mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use args::Args;
use commands::UsageError;
use report::{Manifest, Outputs};

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn out_dir(args: &Args) -> PathBuf {
    match std::env::var_os("AOI_OUT_DIR") {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => args.out.clone(),
    }
}

fn execute(cli: Args) -> Result<()> {
    let args = match &cli.manifest {
        Some(path) => Args {
            out: cli.out.clone(),
            manifest: None,
            ..Manifest::read(path)?.args
        },
        None => cli,
    };
    let mut out = Outputs::new(out_dir(&args))?;
    let result = commands::run(&args, &mut out);
    let mut files = out.written().to_vec();
    files.push("manifest.json".into());
    out.json("manifest.json", &Manifest::new(&args, &files))?;
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    }
}
