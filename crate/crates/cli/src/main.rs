mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "sonoseg",
    version,
    about = "Breast ultrasound segmentation and classification"
)]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

/// Configuration file plus `key=value` overrides.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set train.lr_init=1e-4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Layout {
    /// One folder per class with `<name>_mask*.png` masks.
    Busi,
    /// `images/` and `masks/` with colour-coded masks.
    External,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a stratified train/val/test manifest for a dataset.
    Split(commands::SplitArgs),
    /// Generate a synthetic phantom dataset.
    Synth(commands::SynthArgs),
    /// Train a model and write checkpoints and the epoch history.
    Train(commands::TrainArgs),
    /// Score one checkpoint or an ensemble of them.
    Eval(commands::EvalArgs),
    /// Fine-tune on a target domain at increasing data fractions.
    Adapt(commands::AdaptArgs),
    /// Attention-gate validation and Grad-CAM panels.
    Interpret(commands::InterpretArgs),
    /// Merge metric reports from several runs into one table.
    Report(commands::ReportArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Split(a) => commands::split(a),
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Adapt(a) => commands::adapt(a),
        Command::Interpret(a) => commands::interpret(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
