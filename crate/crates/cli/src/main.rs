//! `marginflat` command-line driver.
//!
//! Exit codes: 0 success, 1 metric gate failure, 2 configuration or input
//! error, 3 numerical failure.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use marginflat::losses::ForgetLossKind;

use crate::failure::Failure;

#[derive(Parser)]
#[command(
    name = "marginflat",
    version,
    about = "Constrained unlearning on a toy corpus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a complete default configuration.
    InitConfig {
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the synthetic forget/retain corpus.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the reference model (or, with --retain-only, the retrained oracle).
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train on the retain split only.
        #[arg(long)]
        retain_only: bool,
    },
    /// Run the unlearning solver from a reference checkpoint.
    Unlearn {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Override `solver.forget_loss`.
        #[arg(long, value_parser = parse_forget_loss)]
        forget_loss: Option<ForgetLossKind>,
    },
    /// Evaluate a checkpoint; exits 0 iff the retain constraint holds.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        oracle: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write per-position response logits for every corpus example.
    ExportLogits {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_forget_loss(s: &str) -> Result<ForgetLossKind, String> {
    s.parse().map_err(|e: marginflat::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<(), Failure> = match cli.command {
        Command::InitConfig { out } => commands::init_config(out.as_deref()),
        Command::GenData { config, out } => commands::gen_data(&config, &out),
        Command::Pretrain {
            config,
            corpus,
            out,
            retain_only,
        } => commands::pretrain(&config, &corpus, &out, retain_only),
        Command::Unlearn {
            config,
            corpus,
            reference,
            out_dir,
            forget_loss,
        } => commands::unlearn(&config, &corpus, &reference, &out_dir, forget_loss),
        Command::Eval {
            config,
            corpus,
            checkpoint,
            reference,
            oracle,
            out,
        } => commands::eval(
            &config,
            &corpus,
            &checkpoint,
            &reference,
            oracle.as_deref(),
            &out,
        ),
        Command::ExportLogits {
            config,
            corpus,
            checkpoint,
            out,
        } => commands::export_logits(&config, &corpus, &checkpoint, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("marginflat: {failure}");
            failure.exit_code()
        }
    }
}
