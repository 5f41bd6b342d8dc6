//! `clsd`: build, score and analyse cross-lingual semantic discrimination
//! benchmarks from the command line.
//!
//! Exit codes: 0 on success, 1 for usage, validation and data errors, 2 when
//! an external provider (embedding, chat or translation service) fails.

mod commands;
pub mod config;
pub mod output;
pub mod render;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "clsd",
    version,
    about = "Cross-lingual semantic discrimination toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    /// Hashed character 3-grams; offline and deterministic.
    Lexical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

/// Picks the embedder: `--backend` wins over the config's embedding section.
#[derive(Debug, Args)]
struct EmbedArgs {
    #[arg(long, value_enum)]
    backend: Option<Backend>,
    #[arg(long, default_value_t = 512)]
    lexical_dim: usize,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate four distractors per corpus pair with a chat model.
    Generate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a dataset file and list every problem found.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Overlap statistics for a dataset.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a dataset (direct or pivot) and write a P@1 report.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        embed: EmbedArgs,
        /// Name recorded in the report; defaults to the file stem.
        #[arg(long)]
        dataset_id: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Translate every sentence of a dataset into a pivot language.
    Pivot {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "en")]
        pivot_lang: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Instances that succeed under one report but not the other.
    Compare {
        #[arg(long)]
        report_a: PathBuf,
        #[arg(long)]
        report_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Normalization factor: parallel minus unrelated mean similarity.
    Norm {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        embed: EmbedArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// List single-token swaps as untagged annotation candidates.
    DiffAnnotate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Normalized cross- and monolingual shifts per part of speech.
    Shift {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        norm: PathBuf,
        /// Separate factor for the monolingual shift.
        #[arg(long)]
        mono_norm: Option<PathBuf>,
        #[command(flatten)]
        embed: EmbedArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Levenshtein distribution of successful distractors.
    Bins {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Config supplying custom bin edges.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// P@1 tables across reports.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "markdown")]
        format: ReportFormat,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    err.chain()
        .find_map(|cause| cause.downcast_ref::<clsd_core::Error>())
        .map_or(1, |e| if e.is_provider() { 2 } else { 1 })
}
