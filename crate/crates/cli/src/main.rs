use std::path::PathBuf;
use std::process::ExitCode;

use aeroguard_cli::commands::{self, Context};
use aeroguard_cli::config::RunConfig;
use aeroguard_cli::CliResult;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aeroguard", version, about = "Quadrotor fault detection and identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory holding every artifact of the run.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override one configuration key, e.g. `--set detector.epochs=10`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a flight campaign into traces and a manifest.
    Simulate {
        #[arg(long)]
        runs: Option<usize>,
        /// `all`, `experimental` or a list such as `1,2,3`.
        #[arg(long)]
        classes: Option<String>,
    },
    /// Split flights into train and test sets.
    Prepare,
    /// Train the autoencoder detector and fit its error model.
    TrainDetector,
    /// Score held-out windows and write the ROC curve.
    Score,
    /// Train the fault classifier.
    TrainClassifier,
    /// Measure identification accuracy, optionally behind the detector.
    Evaluate {
        #[arg(long)]
        pipeline: bool,
    },
    /// Time detector inference for 1, 2 and 3 channels.
    Profile,
}

fn run(cli: Cli) -> CliResult<()> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| aeroguard_core::Error::Config(format!("`--set {o}` needs KEY=VALUE")))?;
        config.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        config.set("seed", &seed.to_string())?;
    }
    if let Command::Simulate { runs, classes } = &cli.command {
        if let Some(r) = runs {
            config.set("sim.runs", &r.to_string())?;
        }
        if let Some(c) = classes {
            config.set("sim.classes", c)?;
        }
    }
    let ctx = Context { config, out: cli.out };
    match cli.command {
        Command::Simulate { .. } => commands::simulate(&ctx),
        Command::Prepare => commands::prepare(&ctx),
        Command::TrainDetector => commands::train_detector(&ctx),
        Command::Score => commands::score(&ctx),
        Command::TrainClassifier => commands::train_classifier(&ctx),
        Command::Evaluate { pipeline } => commands::evaluate(&ctx, pipeline),
        Command::Profile => commands::profile(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
