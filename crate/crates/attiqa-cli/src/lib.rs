//! Command-line front door wiring the pipeline stages together, with a run
//! manifest written beside every command's output.
//!
//! Exit codes: 0 success, 1 validation error (bad flags, config, or input
//! files), 2 runtime failure.

mod commands;
mod run_manifest;

pub use run_manifest::{manifest_path_for, RunManifest};

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::sync::Once;

#[derive(Parser)]
#[command(
    name = "attiqa",
    version,
    about = "Attribute-aware image quality assessment pipeline"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Master seed; overrides the config file's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Run configuration (JSON). Defaults to the desk-scale preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Evaluate candidate prompt pairs with the proxy tasks and select the
    /// best pair per attribute.
    SelectPrompts {
        /// Candidate adjective file (JSON), or "default" for the bundled bank.
        #[arg(long)]
        candidates: String,
        /// Directory of PNG images for the distortion proxy.
        #[arg(long)]
        images: Option<PathBuf>,
        /// Attribute-annotated manifest for the perception proxy.
        #[arg(long)]
        perception: Option<PathBuf>,
        #[arg(long, default_value = "analytic-mock")]
        provider: String,
        #[arg(long, value_parser = ["joint", "distortion", "perception"], default_value = "joint")]
        mode: String,
        /// Cap on annotated records scored by the perception proxy.
        #[arg(long, default_value_t = 1000)]
        perception_cap: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every manifest image with five prompt pairs and append the
    /// pseudo-labels to a store.
    GenLabels {
        #[arg(long)]
        manifest: PathBuf,
        /// Prompt pairs: a pair-set JSON or a selection report.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value = "analytic-mock")]
        provider: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the attribute heads on pseudo-labels.
    Pretrain {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pretraining loss override.
        #[arg(long, value_parser = ["ranking", "l2"])]
        loss: Option<String>,
        /// Validate inputs and write the run manifest without training.
        #[arg(long)]
        dry_run: bool,
    },
    /// Fine-tune a pretraining checkpoint to MOS.
    Finetune {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Freeze backbone and heads; train only the regressor.
        #[arg(long)]
        linear_probe: bool,
        /// Validate inputs and write the run manifest without training.
        #[arg(long)]
        dry_run: bool,
    },
    /// Score a MOS-annotated manifest and report SROCC/PLCC.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Force five-crop averaging regardless of the config.
        #[arg(long)]
        five_crop: bool,
    },
    /// Cross-dataset validation: SROCC-only report on an unseen manifest.
    Crossval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Training dataset name; defaults to the checkpoint's record.
        #[arg(long)]
        train_name: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Agreement between model preferences and human pairwise choices.
    ComparePairs {
        #[arg(long)]
        ckpt: PathBuf,
        /// Benchmark JSONL: {"a": path, "b": path, "pref": "A"|"B"}.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply one distortion level to an image and write the result as PNG.
    Distort {
        #[arg(long)]
        image: PathBuf,
        /// Distortion kind, e.g. gaussian_blur or iso_noise.
        #[arg(long)]
        kind: String,
        /// Level index into the kind's default schedule.
        #[arg(long)]
        level: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failures split by exit code.
pub enum CliError {
    /// Bad flags or invalid input files: exit 1.
    Validation(String),
    /// Failure while executing the command: exit 2.
    Runtime(String),
}

impl CliError {
    pub fn validation(e: impl std::fmt::Display) -> CliError {
        CliError::Validation(e.to_string())
    }

    pub fn runtime(e: impl std::fmt::Display) -> CliError {
        CliError::Runtime(e.to_string())
    }
}

static RAYON_INIT: Once = Once::new();

/// Parses argv and executes the subcommand, returning the process exit code.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes, not usage errors.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };

    if let Some(jobs) = cli.jobs {
        RAYON_INIT.call_once(|| {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global();
        });
    }

    match commands::run(&cli, &argv) {
        Ok(()) => 0,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}
