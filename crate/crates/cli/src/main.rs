//! `rampflow` command-line driver: train, evaluate, sweep and time the
//! headway controller. Set `RAMPFLOW_LOG` (error, warn, info, debug, trace)
//! to control logging; the default is `info`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod eval;
mod latency;
mod output;
mod runner;
mod sweep;
mod train;

use runner::ControllerKind;
use sweep::Axis;

#[derive(Debug, Parser)]
#[command(
    name = "rampflow",
    version,
    about = "Highway on-ramp simulation with learned ACC headways"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; omitted blocks take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a headway Q-network; writes model.json and reward_curve.csv.
    Train {
        #[command(flatten)]
        common: Common,
        /// Number of episodes, overriding `run.episodes`.
        #[arg(long)]
        episodes: Option<u64>,
    },
    /// Run `run.eval_runs` seeded episodes with the configured controller.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Model file, overriding `controller.model`.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Sweep one parameter; writes a long-format sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated axis values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        /// Controllers to compare (default: the configured one).
        #[arg(long, value_enum, value_delimiter = ',')]
        controllers: Vec<ControllerKind>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Worker threads; output is identical for any value.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Time featurize + forward + select for a trained model.
    Latency {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RAMPFLOW_LOG", "info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { common, episodes } => {
            train::run(common.config.as_deref(), common.seed, episodes, &common.out)
        }
        Command::Eval {
            common,
            model,
            jobs,
        } => eval::run(
            common.config.as_deref(),
            common.seed,
            model.as_deref(),
            jobs.max(1),
            &common.out,
        ),
        Command::Sweep {
            common,
            axis,
            values,
            controllers,
            model,
            jobs,
        } => sweep::run(sweep::SweepArgs {
            config: common.config.as_deref(),
            seed: common.seed,
            axis,
            values: &values,
            controllers: &controllers,
            model: model.as_deref(),
            jobs: jobs.max(1),
            out: &common.out,
        }),
        Command::Latency {
            common,
            model,
            trials,
        } => latency::run(
            common.config.as_deref(),
            common.seed,
            model.as_deref(),
            trials.max(1),
            &common.out,
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
