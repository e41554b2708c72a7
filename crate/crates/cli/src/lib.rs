//! Operator surface for the meter: `ippsm` subcommands and the HTTP service.

pub mod commands;
pub mod exit;
pub mod render;
pub mod response;
pub mod server;

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ippsm_core::neural::Preset;

pub use commands::run;

#[derive(Debug, Parser)]
#[command(name = "ippsm", version, about = "Interpretable probabilistic password strength meter")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an inpainting model on a leak corpus.
    Train(TrainArgs),
    /// Score passwords (argument or one per stdin line).
    Score(ScoreArgs),
    /// Rank the alphabet at one position and suggest secure substitutes.
    Suggest(SuggestArgs),
    /// Perturb one password, or run the strength-improvement experiment.
    Perturb(PerturbArgs),
    /// Weighted Spearman correlation of the meter against a test leak.
    Evaluate(EvaluateArgs),
    /// Serve `POST /score` and `GET /health`.
    Serve(ServeArgs),
    /// Write the synthetic desk corpus.
    GenCorpus(GenCorpusArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    /// `count password` per line if every line parses that way, else plain.
    Auto,
    Plain,
    Counts,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlphabetChoice {
    /// Symbols observed in the training split.
    Observed,
    /// The 95 printable ASCII characters.
    Printable,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long, value_enum, default_value_t = InputFormat::Auto)]
    pub format: InputFormat,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub input: CorpusArgs,
    #[arg(long, default_value = "desk", value_parser = parse_preset)]
    pub preset: Preset,
    #[arg(long, default_value_t = 16)]
    pub max_len: usize,
    #[arg(long, default_value_t = 5)]
    pub min_len: usize,
    #[arg(long, value_enum, default_value_t = AlphabetChoice::Observed)]
    pub alphabet: AlphabetChoice,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub label_smoothing: Option<f64>,
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seed of the train/test split.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Loss trace as JSON lines; defaults to `<out>.log.jsonl`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub train_out: Option<PathBuf>,
    #[arg(long)]
    pub test_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArg {
    #[arg(long, env = "IPPSM_MODEL")]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Password to score; reads one per line from stdin when omitted.
    pub password: Option<String>,
    #[arg(long, conflicts_with = "tty")]
    pub json: bool,
    #[arg(long)]
    pub tty: bool,
    #[arg(long, short, default_value_t = response::DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SuggestArgs {
    #[command(flatten)]
    pub model: ModelArg,
    pub password: String,
    /// 0-based position to improve.
    #[arg(long)]
    pub position: usize,
    #[arg(long, short, default_value_t = response::DEFAULT_K)]
    pub k: usize,
    /// Substitution pool; defaults to the model alphabet.
    #[arg(long)]
    pub pool: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeChoice {
    All,
    Baseline,
    Semi,
    Fully,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Perturb this single password instead of running the experiment.
    #[arg(long)]
    pub password: Option<String>,
    #[arg(long, value_enum, default_value_t = ModeChoice::All)]
    pub mode: ModeChoice,
    /// Substitution counts, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 2, 3])]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Substitution pool; defaults to the 25 most frequent training symbols,
    /// or the model alphabet without a training corpus.
    #[arg(long)]
    pub pool: Option<String>,
    /// Leak the attacker is trained on (and the default pool source).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Leak the weak set is drawn from.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[command(flatten)]
    pub input: CorpusArgs,
    #[arg(long, default_value_t = 500)]
    pub weak: usize,
    #[arg(long, default_value_t = 3)]
    pub attacker_order: usize,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Guess number assigned to unguessed passwords.
    #[arg(long, default_value_t = ippsm_core::eval::REPORTING_CAP)]
    pub cap: f64,
    /// Write the CSV report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long)]
    pub test: PathBuf,
    #[command(flatten)]
    pub input: CorpusArgs,
    /// Use the meter's own ranking as ground truth (sanity check; ws = 1).
    #[arg(long)]
    pub self_ranks: bool,
    /// Also report random and unigram meters fitted on this leak.
    #[arg(long)]
    pub baselines: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long, default_value_t = 100_000)]
    pub observations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: ippsm_core::Error| e.to_string())
}
