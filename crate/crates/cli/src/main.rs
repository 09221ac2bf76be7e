//! `spark`: augment → train → evaluate → gradcheck → synth.
//!
//! Exit codes: 0 success, 1 operational error, 2 acceptance failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "spark", version, about = "Argument quality scoring with LLM-generated context")]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random stream; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config. Defaults to `out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// More logging (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate augmentation texts for every record.
    Augment(AugmentArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint and write report.csv / report.txt.
    Evaluate(EvaluateArgs),
    /// Compare analytic and finite-difference gradients on a tiny model.
    Gradcheck(GradcheckArgs),
    /// Run the synthetic augmentation experiment.
    Synth(SynthArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProviderKind {
    Mock,
    Http,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    /// Input dataset (CSV or JSONL); repeatable.
    #[arg(long = "dataset")]
    pub datasets: Vec<PathBuf>,
    /// `mock` works offline; `http` needs a provider config.
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Provider settings (JSON); required with `--provider http`.
    #[arg(long)]
    pub provider_config: Option<PathBuf>,
    /// `all`, `none`, or a comma-separated list of kinds.
    #[arg(long, default_value = "all")]
    pub kinds: String,
    /// Response cache; defaults to `<out>/cache`.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Input dataset (CSV or JSONL); repeatable. Overrides the config.
    #[arg(long = "dataset")]
    pub datasets: Vec<PathBuf>,
    /// Augmentation JSONL; defaults to `<out>/augmentations.jsonl`.
    #[arg(long)]
    pub augmentations: Option<PathBuf>,
    /// Train without any augmentation text.
    #[arg(long, conflicts_with = "augmentations")]
    pub no_augs: bool,
    /// `single` or `dual`; overrides the model config.
    #[arg(long)]
    pub mode: Option<String>,
    /// Overrides the training config.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Active kinds: `all`, `none`, or a list.
    #[arg(long)]
    pub augs: Option<String>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Defaults to `<out>/checkpoint`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Input dataset (CSV or JSONL); repeatable. Overrides the config.
    #[arg(long = "dataset")]
    pub datasets: Vec<PathBuf>,
    /// Augmentation JSONL; defaults to `<out>/augmentations.jsonl`.
    #[arg(long)]
    pub augmentations: Option<PathBuf>,
    /// `all`, `none`, or a list; repeat for several report rows.
    #[arg(long = "augs", default_value = "all")]
    pub augs: Vec<String>,
    /// Evaluate every subset of the four kinds.
    #[arg(long)]
    pub ablation: bool,
    /// `train`, `dev` or `test`.
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-4)]
    pub epsilon: f64,
    /// Largest relative error allowed per element.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// `single` or `dual`.
    #[arg(long, default_value = "dual")]
    pub mode: String,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Print the planned runs and exit without writing anything.
    #[arg(long)]
    pub dry_run: bool,
    /// Overrides the synth training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Training records per run.
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Test records per run.
    #[arg(long)]
    pub n_test: Option<usize>,
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
    match commands::run(&cli) {
        Ok(commands::Outcome::Success) => ExitCode::SUCCESS,
        Ok(commands::Outcome::AcceptanceFailure) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
