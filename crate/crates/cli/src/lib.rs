//! Command-line front end: ingestion, estimation, simulation studies and
//! reports, with reproducible artifacts.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod table;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand as ClapSubcommand};

pub use config::{RunConfig, Settings, Subcommand};
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "currstat", version, about = "Survival estimation from current-status data with nonresponse")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat JSON config; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Debug, ClapSubcommand)]
pub enum Command {
    /// Survival curve with pointwise intervals (extended, complete-case or NPMLE).
    FitCir(RunArgs),
    /// Cox regression with bootstrap inference.
    FitCox(RunArgs),
    /// Monte Carlo bias and coverage studies.
    Simulate(RunArgs),
    /// Markdown summary of the artifacts in a directory.
    Report(RunArgs),
}

impl Command {
    fn parts(&self) -> (Subcommand, &RunArgs) {
        match self {
            Command::FitCir(a) => (Subcommand::FitCir, a),
            Command::FitCox(a) => (Subcommand::FitCox, a),
            Command::Simulate(a) => (Subcommand::Simulate, a),
            Command::Report(a) => (Subcommand::Report, a),
        }
    }
}

/// Resolve the configuration, size the worker pool and run the subcommand.
/// Returns the paths written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let (sub, args) = cli.command.parts();
    let cfg = RunConfig::resolve(sub, args.config.as_deref(), &args.settings)?;
    let work = || -> Result<Vec<PathBuf>> {
        let dir = cfg.out_dir();
        let files = match sub {
            Subcommand::FitCir => commands::fit_cir_cmd(&cfg)?,
            Subcommand::FitCox => commands::fit_cox_cmd(&cfg)?,
            Subcommand::Simulate => commands::simulate_cmd(&cfg)?,
            Subcommand::Report => return Ok(vec![report::report_cmd(&cfg)?]),
        };
        Ok(files.into_iter().map(|f| dir.join(f.name)).collect())
    };
    match cfg.settings.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {t} threads: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Output directory the error document goes to, if the arguments name one.
pub fn error_dir(cli: &Cli) -> Option<PathBuf> {
    cli.command.parts().1.settings.out.clone()
}
