//! The `lesionsynth` command line: configuration, dataset ingestion and the
//! pipeline commands.

pub mod commands;
pub mod config;
pub mod ingest;

use std::path::PathBuf;

use clap::Parser;

pub use commands::{dispatch, prepare_maps, Command, Invocation};
pub use config::{parse_config, parse_config_str, PipelineConfig, DATA_ENV};
pub use ingest::{ingest_dataset, DatasetManifest, ImageRecord, Split};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "lesionsynth",
    version,
    about = "Lesion synthesis and evaluation pipeline"
)]
pub struct Cli {
    /// prepare-maps, train-pix2pixhd, train-pgan, synthesize, evaluate or report
    pub command: String,
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Checkpoint for `synthesize`; defaults to the newest one under `--out`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

impl Cli {
    pub fn invocation(&self) -> Result<Invocation> {
        let command: Command = self.command.parse()?;
        let mut config = parse_config(&self.config)?;
        if let Some(seed) = self.seed {
            config.apply_seed(seed);
            config.validate()?;
        }
        Ok(Invocation {
            command,
            config,
            out: self.out.clone(),
            checkpoint: self.checkpoint.clone(),
        })
    }
}

/// Exit status for an error: 2 for usage and configuration problems, 1
/// otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Usage(_) | Error::Config { .. } => 2,
        _ => 1,
    }
}

/// Parses, dispatches and reports; returns the process exit status.
pub fn run(cli: &Cli) -> i32 {
    match cli.invocation().and_then(|inv| dispatch(&inv)) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("lesionsynth: {e}");
            exit_code(&e)
        }
    }
}
