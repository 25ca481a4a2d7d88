//! The `ctxprobe` command line: pipeline steps over a TOML config, a
//! kappa calculator and the annotation service.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 internal error.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod error;
pub mod server;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use ctxprobe_core::probe::EditRegistry;
use ctxprobe_core::Task;

use crate::commands::Ctx;
use crate::config::{Config, Overrides, DEFAULT_CONFIG};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "ctxprobe", version, about = "Annotation-artifact diagnostics for NLI datasets")]
struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true, default_value = DEFAULT_CONFIG)]
    config: PathBuf,
    /// Output directory, overriding `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed, overriding `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse datasets and check split sizes.
    Ingest,
    /// Train the bag-of-n-grams models on each train split.
    TrainBow,
    /// Write BoW predictions for held-out splits and edited sets.
    PredictBow,
    /// Fit one temperature per model on the validation split.
    Calibrate,
    /// Select test instances that either baseline gets right.
    Subselect,
    /// Draw instances to edit from the candidates.
    SampleEdits {
        /// Also queue the assignments in the edit registry.
        #[arg(long)]
        enqueue: bool,
    },
    /// Import released edited sets.
    ImportEdits,
    /// Accuracy tables, overall and per label transition.
    Evaluate,
    /// Confidence-shift points and ternary heatmaps.
    Analyze,
    /// Cohen's kappa from a rater-pair CSV or from the edit registry.
    Kappa {
        /// CSV with two label columns and a header row.
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Task of the labels (nli or dnli); inferred when omitted.
        #[arg(long)]
        task: Option<String>,
    },
    /// Run the annotation HTTP service.
    Serve {
        /// Listen address; overrides the environment and the config.
        #[arg(long)]
        address: Option<String>,
    },
    /// Verify artifacts against their inputs and bundle the tables.
    Report,
    /// Run every step from ingest to report.
    Pipeline,
}

fn parse_task(s: Option<&str>) -> CliResult<Option<Task>> {
    s.map(|t| t.parse().map_err(|e: ctxprobe_core::Error| CliError::usage(e.to_string())))
        .transpose()
}

fn execute(cli: Cli) -> CliResult<()> {
    let overrides = Overrides {
        out_dir: cli.out.clone(),
        seed: cli.seed,
    };
    if let Command::Kappa { pairs: Some(path), task } = &cli.command {
        let report = commands::kappa_from_pairs(path, parse_task(task.as_deref())?)?;
        println!("{}", commands::format_agreement(&report));
        return Ok(());
    }
    let ctx = Ctx::new(Config::load(&cli.config, &overrides)?);
    match cli.command {
        Command::Ingest => commands::ingest(&ctx),
        Command::TrainBow => commands::train_bow(&ctx),
        Command::PredictBow => commands::predict_bow(&ctx),
        Command::Calibrate => commands::calibrate(&ctx),
        Command::Subselect => commands::subselect(&ctx),
        Command::SampleEdits { enqueue } => commands::sample_edits(&ctx, enqueue),
        Command::ImportEdits => commands::import_edit_sets(&ctx),
        Command::Evaluate => commands::evaluate(&ctx),
        Command::Analyze => commands::analyze(&ctx),
        Command::Kappa { task, .. } => {
            for (t, report) in commands::kappa_from_registry(&ctx, parse_task(task.as_deref())?)? {
                println!("{t}: {}", commands::format_agreement(&report));
            }
            Ok(())
        }
        Command::Serve { address } => serve(&ctx, address),
        Command::Report => commands::report(&ctx),
        Command::Pipeline => commands::pipeline(&ctx),
    }
}

fn serve(ctx: &Ctx, address: Option<String>) -> CliResult<()> {
    let r = ctx
        .cfg
        .registry
        .as_ref()
        .ok_or_else(|| CliError::usage("serve needs a [registry] section"))?;
    let registry = EditRegistry::open(&r.path, r.policy)?;
    let address = address.unwrap_or_else(|| ctx.cfg.serve_address());
    let state = server::AppState::new(registry, ctx.ws.out_path("analytics"));
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::internal(e.to_string()))?;
    runtime
        .block_on(server::serve(state, &address))
        .map_err(|e| CliError::internal(format!("{address}: {e}")))
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("ctxprobe: {e}");
            e.exit_code()
        }
    }
}
