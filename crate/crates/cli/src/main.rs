//! `gee`: atomic edit extraction and grammar error explanation over JSONL
//! files.
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 bad data, 3 provider
//! failure.

mod artifacts;
mod commands;
mod config;
mod failure;
mod parallel;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gee_core::Lang;

use crate::failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "gee", version, about = "Grammar error explanation pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Only process pairs in this language.
    #[arg(long, global = true, value_parser = parse_lang)]
    pub lang: Option<Lang>,
    /// Response cache directory (model steps only).
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Append one JSON line per model call here.
    #[arg(long, global = true)]
    pub run_log: Option<PathBuf>,
}

fn parse_lang(s: &str) -> Result<Lang, String> {
    s.parse()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Rule,
    Llm,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter a corpus and write corpus statistics.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Defaults to `<output>.stats.json`.
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Input format; guessed from the extension when omitted.
        #[arg(long)]
        format: Option<String>,
        /// Keep every pair.
        #[arg(long)]
        no_filter: bool,
        /// Also write chat-format fine-tuning data from the gold edits.
        #[arg(long)]
        finetune: Option<PathBuf>,
    },
    /// Extract atomic edits for every pair.
    Extract {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "rule")]
        mode: Mode,
    },
    /// Generate one explanation per edit.
    Explain {
        /// Output of `extract`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score extracted edits against gold edits.
    EvalEdits {
        /// Output of `extract`.
        #[arg(long)]
        predictions: PathBuf,
        /// Corpus with gold edits.
        #[arg(long)]
        gold: PathBuf,
        /// JSONL verdicts on queued edits.
        #[arg(long)]
        adjudications: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        /// Defaults to `<report>.queue.jsonl`.
        #[arg(long)]
        queue: Option<PathBuf>,
    },
    /// Check which edits are explained and which explanations are made up.
    EvalCoverage {
        /// Output of `explain`.
        #[arg(long)]
        explanations: PathBuf,
        /// Take the edits from this file (by pair id) instead.
        #[arg(long)]
        edits: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Aggregate human annotations of explanations.
    Report {
        #[arg(long)]
        annotations: PathBuf,
        /// Pair ids annotated twice, one per line.
        #[arg(long)]
        dual_ids: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("gee: {f:#}");
            ExitCode::from(f.code())
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if f.alternate() {
            write!(f, "{:#}", self.error())
        } else {
            write!(f, "{}", self.error())
        }
    }
}
