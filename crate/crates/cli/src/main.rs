mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

/// Synthetic xApp conflict experiments: dataset generation, rule-based and
/// learned classification, latency benchmarks and the closed-loop scenario.
#[derive(Parser, Debug)]
#[command(name = "ricconf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize an ecosystem and simulate a labelled dataset.
    Generate(ExperimentConfig),
    /// Re-annotate a dataset with the rule engine and compare labels.
    Annotate(ExperimentConfig),
    /// Train classifiers on a dataset and save them as JSON.
    Train(ExperimentConfig),
    /// Accuracy and macro-F1 over seeds for each (method, m, intensity).
    Eval(ExperimentConfig),
    /// Per-row classification time across ecosystem sizes.
    Bench(ExperimentConfig),
    /// Run the closed-loop conflict management scenario.
    Scenario(ExperimentConfig),
    /// Summarize and verify the manifests in the output directory.
    Report(ExperimentConfig),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (cfg, run): (ExperimentConfig, fn(&ExperimentConfig) -> anyhow::Result<()>) = match cli.command {
        Command::Generate(c) => (c, commands::generate),
        Command::Annotate(c) => (c, commands::annotate),
        Command::Train(c) => (c, commands::train_cmd),
        Command::Eval(c) => (c, commands::eval),
        Command::Bench(c) => (c, commands::bench),
        Command::Scenario(c) => (c, commands::scenario),
        Command::Report(c) => (c, commands::report),
    };
    let result = cfg.resolve().and_then(|cfg| run(&cfg));
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
