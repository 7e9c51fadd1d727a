//! `leo`: dataset generation, training, evaluation, toy experiments and
//! sampler benchmarks. Exit codes: 0 ok, 2 usage, 3 training abort, 4 I/O.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use leo_core::LeoError;

mod commands;
mod config;

/// Invalid flags or config contents.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Usage(pub String);

#[derive(Parser, Debug)]
#[command(name = "leo", version, about = "Learn factor-graph noise models with the optimizer in the loop")]
struct Cli {
    /// Worker threads for episode-level parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic navigation dataset (JSONL) plus a `.spec.json` echo.
    DatasetGen(DatasetGenArgs),
    /// Train noise parameters with one of the methods.
    Train(TrainArgs),
    /// Solve a dataset split with fixed θ and report tracking errors.
    Eval(EvalArgs),
    /// The scalar regression experiment.
    #[command(subcommand)]
    Toy1d(ToyCommand),
    /// Compare Laplace and HMC sampling on one episode.
    BenchSampler(BenchArgs),
}

#[derive(Args, Debug)]
pub struct DatasetGenArgs {
    /// N1 | N2 | N3 | N4
    #[arg(long, required_unless_present = "config")]
    pub id: Option<String>,
    #[arg(long, env = "LEO_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub num_traj: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub train_count: Option<usize>,
    /// Generation spec JSON (as written next to a dataset).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// leo | perceptron | nelder-mead | surrogate
    #[arg(required_unless_present = "config")]
    pub method: Option<String>,
    #[arg(required_unless_present = "config")]
    pub dataset: Option<PathBuf>,
    /// Resolved config echoed by an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "LEO_SEED")]
    pub seed: Option<u64>,
    /// const:V | random:LO:HI | θ file
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Nelder-Mead budget in graph solves.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub test_every: Option<usize>,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(required_unless_present = "config")]
    pub theta: Option<PathBuf>,
    #[arg(required_unless_present = "config")]
    pub dataset: Option<PathBuf>,
    /// train | test | all
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for metrics and CSVs; metrics always go to stdout.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum ToyCommand {
    /// Train the MLP energy and export its surface.
    Train(ToyTrainArgs),
    /// Export the energy surface of saved weights as CSV.
    Surface(SurfaceArgs),
}

#[derive(Args, Debug)]
pub struct ToyTrainArgs {
    /// leo | unrolled-gd | unrolled-gn
    #[arg(long)]
    pub method: Option<String>,
    /// Inner-solver start: zero | gt
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long, env = "LEO_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Unrolled inner steps.
    #[arg(long)]
    pub inner_steps: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SurfaceArgs {
    #[arg(long, required_unless_present = "config")]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV path; the config echo goes next to it.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(required_unless_present = "config")]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub episode: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub theta: Option<PathBuf>,
    #[arg(long, env = "LEO_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 4;
    }
    match err.downcast_ref::<LeoError>() {
        Some(LeoError::Config(_) | LeoError::DegenerateSimplex(_)) => 2,
        Some(LeoError::TrainingAbort { .. } | LeoError::Unsolvable(_)) => 3,
        Some(LeoError::Io { .. } | LeoError::Parse { .. }) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .expect("thread pool is configured once");
    }
    let result = match cli.command {
        Command::DatasetGen(a) => commands::dataset_gen(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Toy1d(ToyCommand::Train(a)) => commands::toy_train(a),
        Command::Toy1d(ToyCommand::Surface(a)) => commands::toy_surface(a),
        Command::BenchSampler(a) => commands::bench_sampler(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
