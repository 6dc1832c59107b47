//! Batch CLI for the next point-of-interest engine: preprocess raw data,
//! train, evaluate, predict, and run the input-length experiment.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "nextpoi",
    about = "Next point-of-interest prediction: preprocessing, training and evaluation",
    version
)]
struct Cli {
    /// Optional TOML configuration file; command-line flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert raw GPS or check-in data into a model-ready dataset file.
    Preprocess(PreprocessArgs),
    /// Train a model on a preprocessed dataset.
    Train(TrainArgs),
    /// Score a trained model or the visit-frequency baseline on a split.
    Evaluate(EvaluateArgs),
    /// Rank the next locations for one user.
    Predict(PredictArgs),
    /// Built-in experiments.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum InputFormat {
    /// CSV of raw track points: user_id,lat,lon,timestamp.
    Gps,
    /// Foursquare-style TSV check-in log.
    Checkin,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitName {
    Val,
    Test,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Input file in the declared format.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Input format.
    #[arg(long, value_enum)]
    format: InputFormat,
    /// Output dataset file (JSON). A stats summary is written next to it.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Stay-point window distance bound in meters [default: 200].
    #[arg(long)]
    dist_threshold: Option<f64>,
    /// Stay-point minimum dwell in seconds [default: 1800].
    #[arg(long)]
    time_threshold: Option<i64>,
    /// Clustering radius in meters [default: 150].
    #[arg(long)]
    eps: Option<f64>,
    /// Clustering density threshold, self included [default: 3].
    #[arg(long)]
    min_pts: Option<usize>,
    /// Session window in seconds [default: 86400].
    #[arg(long)]
    session_window: Option<i64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Preprocessed dataset file.
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Output directory for checkpoints and the training log.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Embedding dimension [default: 50].
    #[arg(long)]
    dim: Option<usize>,
    /// Adam learning rate [default: 0.001].
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Dropout rate in [0,1) [default: 0.2].
    #[arg(long)]
    dropout: Option<f64>,
    /// Training epochs [default: 50].
    #[arg(long)]
    epochs: Option<usize>,
    /// Maximum input sequence length [default: 100].
    #[arg(long)]
    max_len: Option<usize>,
    /// Negative samples per training step [default: 10].
    #[arg(long)]
    negatives: Option<usize>,
    /// Batch size [default: 32].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Base random seed; every random stream derives from it [default: 42].
    #[arg(long)]
    seed: Option<u64>,
    /// Disable the activity-duration feature (ablation).
    #[arg(long)]
    no_duration: bool,
    /// Disable the long/short split: the whole input runs through the
    /// short branch (ablation).
    #[arg(long)]
    no_longshort: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Preprocessed dataset file.
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Trained checkpoint to score.
    #[arg(long, value_name = "FILE", conflicts_with = "baseline")]
    model: Option<PathBuf>,
    /// Score a baseline instead of a model. Supported: userpop.
    #[arg(long, value_name = "NAME")]
    baseline: Option<String>,
    /// Which split to score [default: test].
    #[arg(long, value_enum, default_value = "test")]
    split: SplitName,
    /// Cutoffs K for Recall@K and NDCG@K [default: 5,10].
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Output directory for metrics.csv and per_sample.csv.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Trained checkpoint.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Preprocessed dataset file the checkpoint was trained on.
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Original user identifier.
    #[arg(long)]
    user: String,
    /// Number of candidates to print [default: 10].
    #[arg(long, default_value_t = 10)]
    topk: usize,
    /// Prediction time as seconds since the epoch
    /// [default: the user's last check-in time + 1800].
    #[arg(long)]
    at: Option<i64>,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Retrain with truncated histories and report metrics per length.
    InputLength(InputLengthArgs),
}

#[derive(Args)]
struct InputLengthArgs {
    /// Preprocessed dataset file.
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// History lengths to test [default: 20,40,60,80,100,120,140,160,180,200].
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    /// Output directory for input_length.csv.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Training epochs per length [default: 50].
    #[arg(long)]
    epochs: Option<usize>,
    /// Base random seed [default: 42].
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file_config = config::FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Preprocess(args) => commands::preprocess(args, &file_config),
        Command::Train(args) => commands::train(args, &file_config),
        Command::Evaluate(args) => commands::evaluate(args, &file_config),
        Command::Predict(args) => commands::predict(args),
        Command::Experiment(ExperimentCommand::InputLength(args)) => {
            commands::input_length(args, &file_config)
        }
    }
}
