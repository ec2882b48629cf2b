//! Command-line driver for `lpv-core`: TOML configs, CSV traces, gain files and
//! parallel region-of-attraction sweeps.

pub mod commands;
pub mod config;
pub mod error;
pub mod gainfile;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::{ModeKind, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "lpv",
    version,
    about = "LPV trajectory-tracking synthesis for a planar vehicle"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output_dir` from the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Recorded in the gain file for provenance.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Sweep worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Overrides `synthesis.mode`.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeKind>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate and integrate the reference maneuver.
    Reference,
    /// Build the polytope, solve the LMIs and certify the gain.
    Synthesize,
    /// Closed-loop runs from initial speed offsets.
    Simulate {
        /// Gain file, default `<out>/gain.toml`.
        #[arg(long)]
        gain: Option<PathBuf>,
        /// `dv,du` in m/s; repeatable. Defaults to `simulation.offsets_m_per_s`.
        #[arg(long, value_parser = parse_offset, allow_hyphen_values = true)]
        offset: Vec<(f64, f64)>,
    },
    /// Region-of-attraction sweep over the configured grid.
    Sweep {
        /// Gain file, default `<out>/gain.toml`.
        #[arg(long)]
        gain: Option<PathBuf>,
    },
}

fn parse_offset(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected dv,du")?;
    let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    let (dv, du) = (parse(a)?, parse(b)?);
    if dv.is_finite() && du.is_finite() {
        Ok((dv, du))
    } else {
        Err("offsets must be finite".into())
    }
}

pub fn context(cli: &Cli) -> Result<Context, CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(mode) = cli.mode {
        config.synthesis.mode = mode;
    }
    let mut ctx = Context::new(config);
    if let Some(out) = &cli.out {
        ctx.out_dir = out.clone();
    }
    ctx.seed = cli.seed;
    ctx.threads = cli.threads;
    Ok(ctx)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let ctx = context(cli)?;
    match &cli.command {
        Command::Reference => commands::reference(&ctx),
        Command::Synthesize => commands::synthesize(&ctx).map(|_| ()),
        Command::Simulate { gain, offset } => {
            let gain = gain.clone().unwrap_or_else(|| ctx.default_gain_path());
            let offsets: Vec<(f64, f64)> = if offset.is_empty() {
                ctx.config
                    .simulation
                    .offsets_m_per_s
                    .iter()
                    .map(|o| (o[0], o[1]))
                    .collect()
            } else {
                offset.clone()
            };
            commands::simulate(&ctx, &gain, &offsets).map(|_| ())
        }
        Command::Sweep { gain } => {
            let gain = gain.clone().unwrap_or_else(|| ctx.default_gain_path());
            commands::sweep(&ctx, &gain).map(|_| ())
        }
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("lpv: {e}");
            e.exit_code()
        }
    }
}
