//! `cig` — the pipeline driver.
//!
//! Exit codes: 0 success, 2 usage error (from clap, before any work),
//! 3 provider failure, 4 data error (missing/corrupt/inconsistent files),
//! 1 anything else.

mod args;
mod commands;
mod manifest;

use clap::Parser;

use args::{Cli, Command};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::BuildGraph(args) => commands::cmd_build_graph(args),
        Command::TrainScorer(args) => commands::cmd_train_scorer(args),
        Command::Retrieve(args) => commands::cmd_retrieve(args),
        Command::Eval(args) => commands::cmd_eval(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(commands::exit_code_for(&err));
    }
}
