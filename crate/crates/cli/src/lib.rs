//! Command-line entry point: configuration resolution, subcommand dispatch,
//! run directories and exit codes.

pub mod commands;
pub mod http;
pub mod rundir;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// An error in how the tool was invoked (exit 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "citss", version, about = "Contrastive fine-tuning for citation intent classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct ConfigArgs {
    /// TOML config with flat dotted keys, or a preset name
    #[arg(long, short)]
    pub config: String,
    /// `key=value` override; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trailing `key=value` overrides
    #[arg(value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Corpus JSONL; overrides `data.corpus`
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Saved keyphrase base; overrides `data.stk_base`
    #[arg(long)]
    pub stk: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    Sc,
    Kp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportSplitArg {
    Validation,
    Test,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract typed keyphrases from the training split with a text-generation service
    ExtractStk {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Answer from the synthetic corpus lexicon instead of calling the service
        #[arg(long)]
        planted: bool,
    },
    /// Print SC or KP positives as JSONL
    AugmentPreview {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum)]
        strategy: Strategy,
        #[arg(long, default_value_t = 0)]
        epoch: usize,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        /// gr, lr, ab or mixed (scheduled by epoch)
        #[arg(long)]
        op: Option<String>,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        #[arg(long)]
        limit: Option<usize>,
        /// Write here instead of stdout
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fine-tune a model; writes checkpoint, metrics and per-epoch log
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Score a checkpoint on a labeled JSONL split
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Label every record of a JSONL file
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Train the four loss settings over `run_count` seeds
    Ablation {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "test")]
        split: ReportSplitArg,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Instruction-following prompt baseline through the text-generation service
    IfpBaseline {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Write a synthetic corpus and its planted keyphrase base
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1645)]
        train_pool: usize,
        #[arg(long, default_value_t = 284)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    rundir::init_logging();
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            EXIT_USAGE
        }
        Err(e) => {
            log::error!("{e:#}");
            EXIT_RUNTIME
        }
    }
}
