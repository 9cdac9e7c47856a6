mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Overrides;

#[derive(Parser)]
#[command(name = "hpyp", version, about = "Hierarchical Pitman-Yor topic models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one or more chains and write snapshots and traces.
    Train(TrainArgs),
    /// Held-out perplexity and clustering metrics for a trained run.
    Eval(RunArgs),
    /// Top hashtags and words per topic.
    Label(LabelArgs),
    /// Write a synthetic corpus with its ground truth.
    Synth(SynthArgs),
    /// Check every count invariant of a trained run.
    Audit(RunArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// TOML configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// hpyp-lda, hdp-lda or tntm.
    #[arg(long)]
    model: Option<String>,
    /// Ablation of the tweet model; repeatable.
    #[arg(long)]
    ablate: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    mh_start: Option<usize>,
    /// Number of independent chains, run concurrently.
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    edges: Option<PathBuf>,
    /// One class label per document, for purity and NMI.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Any configuration entry as `dotted.key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Directory written by `train`.
    #[arg(long)]
    run: PathBuf,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value_t = 3)]
    top_hashtags: usize,
    #[arg(long, default_value_t = 10)]
    top_words: usize,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub topics: usize,
    #[arg(long, default_value_t = 200)]
    pub docs: usize,
    #[arg(long, default_value_t = 500)]
    pub vocab: usize,
    #[arg(long, default_value_t = 30.0)]
    pub words_per_doc: f64,
    /// Generate tweets with this many authors and a follower network.
    #[arg(long)]
    pub authors: Option<usize>,
    #[arg(long, default_value_t = 1.5)]
    pub hashtags_per_tweet: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => {
            let overrides = Overrides {
                model: a.model,
                ablate: a.ablate,
                seed: a.seed,
                iterations: a.iterations,
                mh_start: a.mh_start,
                chains: a.chains,
                corpus: a.corpus,
                edges: a.edges,
                labels: a.labels,
                set: a.set,
            };
            commands::train(a.config.as_deref(), &overrides, &a.out)
        }
        Command::Eval(a) => commands::eval(&a.run),
        Command::Label(a) => commands::label(&a.run, a.top_hashtags, a.top_words),
        Command::Synth(a) => commands::synth(&a),
        Command::Audit(a) => commands::audit(&a.run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprint!("{failure}");
            ExitCode::from(failure.code())
        }
    }
}
