//! `sentiment`: prepare corpora, encode, train and apply the classification
//! head, balance classes and aggregate predictions into an overall polarity.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical
//! failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sentiment_core::schemes::SentimentScheme;

#[derive(Parser)]
#[command(name = "sentiment", version, about = "BiLSTM sentiment pipeline over precomputed embeddings")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean and label a corpus; writes manifest.txt, train.tsv and test.tsv.
    Prepare(PrepareArgs),
    /// WordPiece-encode a review table.
    Encode(EncodeArgs),
    /// Train the head on an embedding store.
    Train(TrainArgs),
    /// Predict a label for every record of a store.
    Predict(PredictArgs),
    /// Overall polarity of a label file.
    Aggregate(AggregateArgs),
    /// Accuracy, confusion and polarity report of a prediction file.
    Report(ReportArgs),
    /// Oversample a store (smote) or augment a review table (nlpaug).
    Balance(BalanceArgs),
    /// Run a full experiment from a config file.
    Run(RunArgs),
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long)]
    dataset: String,
    #[arg(long)]
    scheme: SentimentScheme,
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// delimited (one review per line) or tree (one file per review).
    #[arg(long, default_value = "delimited")]
    layout: String,
    /// imdb (1-10 without 5 and 6) or five-star.
    #[arg(long, default_value = "imdb")]
    scale: String,
    /// Share of rows marked `auto` that go to the test part.
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    max_len: usize,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Scheme of the label column; the widest scheme accepts any table.
    #[arg(long, default_value = "five")]
    scheme: SentimentScheme,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    preset: String,
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Number of classes; defaults to the largest label in the store plus one.
    #[arg(long)]
    classes: Option<usize>,
    /// pooled or tokens; defaults to the store's mode.
    #[arg(long)]
    input: Option<String>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AggregateArgs {
    #[arg(long)]
    scheme: SentimentScheme,
    #[arg(long)]
    labels: PathBuf,
    /// e.g. neu=0.85,base=1.2,sub=1.5
    #[arg(long)]
    thresholds: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    scheme: SentimentScheme,
    /// Prediction file with a gold column, as written by `predict`.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value = "unnamed")]
    dataset: String,
    #[arg(long, default_value = "-")]
    preset: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    thresholds: Option<String>,
    /// Also write the key/value report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Smote,
    Nlpaug,
}

#[derive(Args)]
struct BalanceArgs {
    #[arg(long, value_enum)]
    method: Method,
    /// An embedding store (smote) or a review table (nlpaug).
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = sentiment_core::balance::DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = sentiment_core::balance::DEFAULT_RATE)]
    rate: f64,
    /// Word-vector table, required by nlpaug.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Defaults to the scheme whose arity is the largest label plus one.
    #[arg(long)]
    scheme: Option<SentimentScheme>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Also write the key/value report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Prepare(a) => commands::prepare(a),
        Command::Encode(a) => commands::encode(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Aggregate(a) => commands::aggregate(a),
        Command::Report(a) => commands::report(a),
        Command::Balance(a) => commands::balance(a),
        Command::Run(a) => commands::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
