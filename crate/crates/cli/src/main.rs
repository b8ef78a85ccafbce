mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvgf_core::Error;

use config::RunConfig;

/// Multi-view gated fusion crop-yield experiments.
#[derive(Parser)]
#[command(name = "mvgf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic multi-view dataset.
    Generate(Overrides),
    /// Cross-validate a model and save per-fold checkpoints.
    Train(Overrides),
    /// Recompute report files from a training run.
    Evaluate(Overrides),
    /// Compare variants along one ablation axis.
    Ablate(Overrides),
    /// Export fusion weights (and linear-head contributions) of a training run.
    Weights(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Training run directory for `evaluate` and `weights`.
    #[arg(long)]
    run: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated subset of s2,weather,dem,soil.
    #[arg(long)]
    views: Option<String>,
    #[arg(long)]
    merger: Option<String>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    folds: Option<String>,
    #[arg(long)]
    year: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    axis: Option<String>,
    #[arg(long)]
    preset: Option<String>,
    /// Any configuration key, as KEY=VALUE; repeatable and applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Overrides {
    fn resolve(&self, command: &str) -> mvgf_core::Result<RunConfig> {
        let mut cfg = RunConfig::new();
        if let Some(path) = &self.config {
            cfg.merge_file(path)?;
        }
        let flags = [
            ("dataset", &self.dataset),
            ("out", &self.out),
            ("run", &self.run),
            ("seed", &self.seed),
            ("model", &self.model),
            ("views", &self.views),
            ("merger", &self.merger),
            ("split", &self.split),
            ("folds", &self.folds),
            ("year", &self.year),
            ("workers", &self.workers),
            ("axis", &self.axis),
            ("preset", &self.preset),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for assignment in &self.set {
            cfg.apply_override(assignment)?;
        }
        cfg.set("command", command)?;
        Ok(cfg)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::NonFinite { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (name, overrides, run): (&str, &Overrides, fn(&RunConfig) -> mvgf_core::Result<()>) = match &cli.command {
        Command::Generate(o) => ("generate", o, commands::generate),
        Command::Train(o) => ("train", o, commands::train),
        Command::Evaluate(o) => ("evaluate", o, commands::evaluate),
        Command::Ablate(o) => ("ablate", o, commands::ablate),
        Command::Weights(o) => ("weights", o, commands::weights),
    };
    match overrides.resolve(name).and_then(|cfg| run(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("mvgf {name}: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
