//! Library side of the `pmtk` command-line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod fmt;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::Context;
use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "pmtk",
    version,
    about = "Visual token selection and prefill cost tools"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML)
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory; overrides output.dir
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides encoder.seed
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Only print errors
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub common: Common,
    /// Read attention maps and embeddings from DIR instead of running the encoder
    #[arg(long, value_name = "DIR")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the encoder and write its attention maps and embeddings
    Encode(Common),
    /// Select pivotal and complementary tokens
    Select(TraceArgs),
    /// Per-layer contribution-degree distributions and token trajectories
    Profile(TraceArgs),
    /// Prefill cost of the full versus reduced token count
    Cost(Common),
    /// encode, select, profile and cost in sequence
    Pipeline(Common),
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Encode(c) | Command::Cost(c) | Command::Pipeline(c) => c,
            Command::Select(t) | Command::Profile(t) => &t.common,
        }
    }
}

fn context(common: &Common) -> CliResult<Context> {
    let mut config = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.encoder.seed = seed;
    }
    let out = common
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| {
            CliError::Usage("no output directory: pass --out or set output.dir".into())
        })?;
    Ok(Context {
        config,
        out,
        quiet: common.quiet,
    })
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let ctx = context(cli.command.common())?;
    match &cli.command {
        Command::Encode(_) => commands::cmd_encode(&ctx).map(drop),
        Command::Select(t) => {
            let trace = commands::obtain_trace(&ctx, t.trace.as_deref())?;
            commands::cmd_select(&ctx, &trace).map(drop)
        }
        Command::Profile(t) => {
            let trace = commands::obtain_trace(&ctx, t.trace.as_deref())?;
            commands::cmd_profile(&ctx, &trace).map(drop)
        }
        Command::Cost(_) => commands::cmd_cost(&ctx, None).map(drop),
        Command::Pipeline(_) => commands::cmd_pipeline(&ctx),
    }
}
