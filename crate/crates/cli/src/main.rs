mod commands;
mod dataset;
mod failure;
mod runlog;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use failure::Failure;
use runlog::RunLog;

#[derive(Parser, Debug)]
#[command(name = "koopgait", version, about = "Koopman gait embeddings: data generation, training, forecasting, recognition and track smoothing")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Random seed (overrides `seed` from --config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for every output file; created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// `key=value` file overriding training defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Also write SVG plots next to the CSV reports.
    #[arg(long, global = true)]
    pub plot: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic population with a gallery/probe manifest.
    Gen(commands::gen::GenArgs),
    /// Train the latent dynamics model on the gallery sequences of a dataset.
    TrainLds(commands::train::TrainLdsArgs),
    /// Train the recognition head on top of a frozen dynamics model.
    TrainHead(commands::train::TrainHeadArgs),
    /// Extend a sequence with forecast frames.
    Forecast(commands::forecast::ForecastArgs),
    /// Rank gallery identities for every probe and write CMC reports.
    Eval(commands::eval::EvalArgs),
    /// Smooth a detection track with sliding cubic fits.
    SmoothTrack(commands::smooth::SmoothArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(commands::gradcheck::GradcheckArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::TrainLds(_) => "train-lds",
            Command::TrainHead(_) => "train-head",
            Command::Forecast(_) => "forecast",
            Command::Eval(_) => "eval",
            Command::SmoothTrack(_) => "smooth-track",
            Command::Gradcheck(_) => "gradcheck",
        }
    }
}

fn run(cli: Cli, log: &mut RunLog) -> Result<(), Failure> {
    let ctx = commands::Context::new(&cli.global, log)?;
    match cli.command {
        Command::Gen(a) => commands::gen::run(&ctx, &a, log),
        Command::TrainLds(a) => commands::train::run_lds(&ctx, &a, log),
        Command::TrainHead(a) => commands::train::run_head(&ctx, &a, log),
        Command::Forecast(a) => commands::forecast::run(&ctx, &a, log),
        Command::Eval(a) => commands::eval::run(&ctx, &a, log),
        Command::SmoothTrack(a) => commands::smooth::run(&ctx, &a, log),
        Command::Gradcheck(a) => commands::gradcheck::run(&ctx, &a, log),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out_dir = cli.global.out_dir.clone();
    let mut log = RunLog::new(cli.command.name());
    let result = std::fs::create_dir_all(&out_dir)
        .map_err(|e| Failure::Usage(format!("cannot create output directory {}: {e}", out_dir.display())))
        .and_then(|_| run(cli, &mut log));
    let code = match &result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    };
    log.finish(code);
    if let Err(e) = log.write(&out_dir) {
        eprintln!("warning: could not write run log: {e}");
    }
    ExitCode::from(code)
}
