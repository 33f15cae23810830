mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Robust discrete matrix completion for rating-scale data: simulate data,
/// fit completion methods, inject attacks and run replicated experiments.
#[derive(Parser)]
#[command(name = "rdmc", version, about, long_about = None)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Base random seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for replications and holdout fits (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Experiment configuration file (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic recommender or survey data
    Simulate(SimulateArgs),
    /// Select lambda and fit one method on a rating file
    Fit(FitArgs),
    /// Append fake profiles that demote a target item
    Attack(AttackArgs),
    /// Score predictions by MAE, or the shift between two prediction files
    Evaluate(EvaluateArgs),
    /// Run a replicated experiment from a configuration file
    Experiment(ExperimentArgs),
    /// Per-group medians and quartiles of a records file
    Summarize(SummarizeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SimKind {
    Recommender,
    Survey,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "recommender")]
    kind: SimKind,
    #[arg(long, default_value_t = 300)]
    rows: usize,
    /// Items of the recommender design
    #[arg(long, default_value_t = 200)]
    cols: usize,
    #[arg(long, default_value_t = 20)]
    rank: usize,
    /// Rating categories K
    #[arg(long)]
    levels: Option<u8>,
    /// mnar or mcar
    #[arg(long, default_value = "mnar")]
    missingness: String,
    #[arg(long, default_value_t = 0.7)]
    mcar_fraction: f64,
    #[arg(long, default_value_t = 10)]
    constructs: usize,
    #[arg(long, default_value_t = 8)]
    items_per_construct: usize,
    #[arg(long, default_value_t = 0.2)]
    abandonment: f64,
    #[arg(long, default_value_t = 0.0)]
    careless: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    MovielensUdata,
    LongCsv,
}

#[derive(Args)]
struct DataArgs {
    /// Rating file
    #[arg(long)]
    data: PathBuf,
    /// File format (default: long-csv for .csv files, movielens-udata otherwise)
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Rating categories of long CSV files
    #[arg(long, default_value_t = 5)]
    levels: u8,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Drop items with fewer ratings
    #[arg(long, default_value_t = 20)]
    min_ratings: usize,
    /// Drop users with fewer ratings (0 keeps all)
    #[arg(long, default_value_t = 0)]
    min_user_ratings: usize,
    /// Keep only users who also appear in this rating file (same format)
    #[arg(long)]
    intersect_users: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// rdmc, si, si-discretized, median, median-discretized, mode, or a full
    /// name such as rdmc-truncated-liberal
    #[arg(long, default_value = "rdmc")]
    method: String,
    /// Loss of rdmc: phuber, absolute, truncated or squared
    #[arg(long, default_value = "phuber")]
    loss: String,
    /// strict or liberal
    #[arg(long, default_value = "strict")]
    stopping: String,
    /// Fit at this lambda instead of selecting it
    #[arg(long)]
    lambda: Option<f64>,
    /// Share of ratings held out for the test MAE (0 fits on everything)
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = 10)]
    holdout_reps: usize,
    #[arg(long, default_value_t = 0.1)]
    holdout_fraction: f64,
    /// Write predictions for every unobserved cell
    #[arg(long)]
    predictions: bool,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    data: DataArgs,
    /// average, reverse-bandwagon or love-hate
    #[arg(long)]
    scheme: String,
    /// Fake profiles as a share of the target's ratings
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    /// Target item id (default: best rated among the most rated tenth)
    #[arg(long)]
    target: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Ratings (user,item,rating) to score predictions against
    #[arg(long, requires = "predictions")]
    truth: Option<PathBuf>,
    /// Predictions (user,item,prediction)
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Predictions before an attack
    #[arg(long, requires_all = ["after", "target"], conflicts_with = "truth")]
    before: Option<PathBuf>,
    /// Predictions after an attack
    #[arg(long, requires = "before")]
    after: Option<PathBuf>,
    /// Target item id for the prediction shift
    #[arg(long, requires = "before")]
    target: Option<String>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Override the number of replications
    #[arg(long)]
    replications: Option<usize>,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Records file written by `experiment`
    #[arg(long)]
    records: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
