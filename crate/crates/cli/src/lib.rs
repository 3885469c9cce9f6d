//! Command-line orchestration of the topic modeling pipeline.
//!
//! Stages communicate only through files in the output directory; a
//! `manifest.json` there records digests of each stage's configuration,
//! inputs and outputs so that `pipeline` can skip work that is current.

pub mod config;
pub mod error;
pub mod manifest;
pub mod stages;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

pub use crate::config::PipelineConfig;
use crate::config::{config_keys_help, ResolvedPaths};
pub use crate::error::CliError;
use crate::manifest::Manifest;
use crate::stages::{Context, Stage};

#[derive(Debug, Parser)]
#[command(name = "tmwr", version, about = "Topic modeling pipeline for drama corpora")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration file; paths in it are relative to its directory.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set model.num_topics=40`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "TMW_JOBS")]
    pub jobs: Option<usize>,
    /// Base random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "TMW_OUTPUT", value_name = "DIR")]
    pub output: Option<PathBuf>,
    /// Only report errors.
    #[arg(long, short, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
    /// More logging; repeat for trace output.
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Parse TEI files, apply metadata and the corpus filter.
    Ingest,
    /// Tokenize, lemmatize, filter content words and segment.
    Prepare,
    /// Train and cross-validate every cell of the model grid.
    Sweep,
    /// Train the final topic model.
    Model,
    /// Cross-validate classifiers on topic and word features.
    Evaluate,
    /// Genre-topic tables, distinctive topics and section distributions.
    Analyze,
    /// PCA and Ward clustering of play-level topic features.
    Cluster,
    /// Draw SVG figures with their data tables.
    Render,
    /// Run every stage in order, skipping those already up to date.
    Pipeline,
}

impl Command {
    fn stage(self) -> Option<Stage> {
        match self {
            Command::Ingest => Some(Stage::Ingest),
            Command::Prepare => Some(Stage::Prepare),
            Command::Sweep => Some(Stage::Sweep),
            Command::Model => Some(Stage::Model),
            Command::Evaluate => Some(Stage::Evaluate),
            Command::Analyze => Some(Stage::Analyze),
            Command::Cluster => Some(Stage::Cluster),
            Command::Render => Some(Stage::Render),
            Command::Pipeline => None,
        }
    }
}

pub fn command() -> clap::Command {
    Cli::command().after_help(config_keys_help())
}

fn init_logging(cli: &Cli) {
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else {
        match cli.verbose {
            0 => log::LevelFilter::Info,
            1 => log::LevelFilter::Debug,
            _ => log::LevelFilter::Trace,
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .try_init();
}

/// Loads and validates the configuration and applies command-line flags.
pub fn build_context(cli: &Cli) -> Result<Context, CliError> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref(), &cli.set)?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.run.jobs = jobs;
    }
    let base: PathBuf = cli
        .config
        .as_deref()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let paths = ResolvedPaths::new(&cfg.paths, &base)?;
    let out = match &cli.output {
        Some(o) => o.clone(),
        None => base.join(&cfg.paths.output),
    };
    let jobs = cfg.run.jobs;
    Ok(Context { cfg, paths, out, jobs })
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let ctx = build_context(cli)?;
    // Already-initialized pools (repeated in-process runs) are fine.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(ctx.jobs).build_global();
    std::fs::create_dir_all(&ctx.out).map_err(error::io_err(&ctx.out))?;
    match cli.command.stage() {
        Some(stage) => {
            if stage == Stage::Sweep && !ctx.cfg.sweep.enabled {
                return Err(CliError::Config("sweep.enabled is false".into()));
            }
            let mut manifest = Manifest::load(&ctx.out);
            stages::run_stage(&ctx, stage, &mut manifest, false)?;
        }
        None => {
            let (ran, skipped) = stages::run_pipeline(&ctx)?;
            log::info!("pipeline finished: {ran} stages run, {skipped} skipped");
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 usage or config error, 2 data error or
/// missing prerequisite, 3 internal error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 1;
        }
    };
    init_logging(&cli);
    match std::panic::catch_unwind(|| execute(&cli)) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("tmwr: {e}");
            e.exit_code()
        }
        Err(_) => {
            eprintln!("tmwr: internal error (panic)");
            3
        }
    }
}
