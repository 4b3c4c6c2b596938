//! The `netsim` command pipeline: configuration, the five subcommands, and SVG output.

pub mod commands;
pub mod config;
pub mod svg;

use std::ffi::OsString;

use clap::Parser;
use log::info;

use crate::error::{Error, Result};
use config::{Cli, Command, RunConfig};

/// Runs one subcommand inside a rayon pool sized by `cfg.threads`.
pub fn run_command(command: Command, cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
    pool.install(|| match command {
        Command::Sim => commands::cmd_sim(cfg).map(|s| {
            info!(
                "{} networks, {} pairs, {} degenerate layer pairs",
                s.networks, s.pairs, s.degenerate_pairs
            )
        }),
        Command::Aggregate => commands::cmd_aggregate(cfg).map(drop),
        Command::Correlate => commands::cmd_correlate(cfg).map(drop),
        Command::Tree => commands::cmd_tree(cfg).map(drop),
        Command::Report => commands::cmd_report(cfg).map(|files| info!("{} SVG files written", files.len())),
    })
}

/// Parses command-line arguments and runs the selected subcommand.
/// Argument errors (including `--help`) exit through clap.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).unwrap_or_else(|e| e.exit());
    let cfg = RunConfig::from_flags(&cli.flags)?;
    run_command(cli.command, &cfg)
}
