//! `salad`: generate story salads from a corpus, select hard mixtures,
//! train pairwise narrative classifiers, cluster mixtures back into
//! narratives, and evaluate or compare the results.

mod commands;
mod conffile;
mod error;
mod manifest;

use clap::{Parser, Subcommand};

use crate::commands::{analyze, cluster, eval, generate, hard_select, heatmap, train};

#[derive(Parser)]
#[command(
    name = "salad",
    version,
    about = "Generate, disentangle, and evaluate story salads"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate salads by pairing and shuffling corpus documents.
    Generate(generate::GenerateArgs),
    /// Keep the k salads whose narratives are most topically similar.
    HardSelect(hard_select::HardSelectArgs),
    /// Train a same-narrative sentence-pair classifier.
    Train(train::TrainArgs),
    /// Cluster each salad into two narratives with k-medoids.
    Cluster(cluster::ClusterArgs),
    /// Score predictions against gold narratives and topic similarity.
    Eval(eval::EvalArgs),
    /// Compare two prediction runs by accuracy bracket.
    Analyze(analyze::AnalyzeArgs),
    /// Export the attention maps for one sentence pair of a salad.
    Heatmap(heatmap::HeatmapArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(args) => generate::run(args),
        Command::HardSelect(args) => hard_select::run(args),
        Command::Train(args) => train::run(args),
        Command::Cluster(args) => cluster::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Analyze(args) => analyze::run(args),
        Command::Heatmap(args) => heatmap::run(args),
    };
    if let Err(e) = outcome {
        log::error!("{e}");
        std::process::exit(e.exit_code());
    }
}
