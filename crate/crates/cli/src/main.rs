//! `romdecipher`: train language and emission models, decode romanized
//! text and score the output.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 training failure.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::FileConfig;
use crate::failure::{Failure, Outcome};

#[derive(Parser, Debug)]
#[command(
    name = "romdecipher",
    version,
    about = "Decipherment of informally romanized text"
)]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for E-steps and decoding (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train Witten–Bell character language models, one file per order.
    TrainLm(TrainLmArgs),
    /// Train an emission model from romanized text or parallel pairs.
    Train(TrainArgs),
    /// Decode romanized text, one sentence per line.
    Decode(DecodeArgs),
    /// Score decoded text against references.
    Eval(EvalArgs),
    /// Romanize original-script text through a synthetic channel.
    Synth(SynthArgs),
    /// Summarize a model file.
    InspectModel(InspectArgs),
}

#[derive(Args, Debug)]
struct TrainLmArgs {
    /// Original-script corpus, one sentence per line.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Directory receiving `lm.<order>.txt`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Comma-separated orders (default: the training schedule's).
    #[arg(long, value_delimiter = ',')]
    orders: Option<Vec<usize>>,
    /// Witten–Bell constant.
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    language: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Unsupervised,
    Supervised,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_enum, default_value_t = Mode::Unsupervised)]
    mode: Mode,
    /// Romanized training text (unsupervised mode).
    #[arg(long)]
    train: Option<PathBuf>,
    /// `latin<TAB>original` pairs (supervised mode).
    #[arg(long)]
    parallel: Option<PathBuf>,
    /// Directory holding `lm.<order>.txt` from `train-lm`.
    #[arg(long)]
    lm_dir: Option<PathBuf>,
    /// Directory receiving the model, traces and run log.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    language: Option<String>,
    /// Built-in prior: phonetic, visual, combined, none or uniform.
    #[arg(long)]
    prior: Option<String>,
    /// Extra prior mapping file; may repeat.
    #[arg(long = "prior-file")]
    prior_files: Vec<PathBuf>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    delay: Option<usize>,
    /// Comma-separated LM order schedule.
    #[arg(long, value_delimiter = ',')]
    orders: Option<Vec<usize>>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    batches_per_stage: Option<usize>,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    /// Emission model written by `train`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Language model file (default: the highest scheduled order in the LM directory).
    #[arg(long)]
    lm: Option<PathBuf>,
    #[arg(long)]
    lm_dir: Option<PathBuf>,
    /// Romanized input, one sentence per line.
    #[arg(long)]
    input: PathBuf,
    /// Output file (default: standard output).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    language: Option<String>,
    #[arg(long)]
    delay: Option<usize>,
    /// Drop emission arcs costlier than this before decoding.
    #[arg(long, conflicts_with = "no_prune")]
    prune: Option<f64>,
    /// Decode with the full emission model.
    #[arg(long)]
    no_prune: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Decoded sentences, one per line.
    #[arg(long)]
    hyp: PathBuf,
    /// Reference sentences, line-aligned with `--hyp`.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Per-sentence report (default: standard output).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Character confusion counts.
    #[arg(long)]
    confusion: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Original-script text, one sentence per line.
    #[arg(long)]
    corpus: PathBuf,
    /// Channel file: rate headers and weighted mapping lines.
    #[arg(long)]
    channel: PathBuf,
    /// Number of sentences to draw.
    #[arg(long)]
    n: usize,
    /// Overrides the channel file's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving `parallel.tsv`, `latin.txt` and `gold.txt`.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct InspectArgs {
    /// Emission model file.
    #[arg(long, required_unless_present = "lm", conflicts_with = "lm")]
    model: Option<PathBuf>,
    /// Language model file.
    #[arg(long)]
    lm: Option<PathBuf>,
    /// Substitutions listed per source character.
    #[arg(long, default_value_t = 3)]
    top: usize,
}

fn run(cli: Cli) -> Outcome {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    if let Some(n) = cli.threads.or(file.threads) {
        if n == 0 {
            return Err(Failure::config("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::config(e.to_string()))?;
    }
    match cli.command {
        Command::TrainLm(a) => commands::train_lm(&file, a),
        Command::Train(a) => commands::train(&file, a),
        Command::Decode(a) => commands::decode(&file, a),
        Command::Eval(a) => commands::eval(a),
        Command::Synth(a) => commands::synth(a),
        Command::InspectModel(a) => commands::inspect(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { failure::USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
