//! `lft`: the command-line front door.
//!
//! Exit codes: 0 success, 1 runtime failure (including verification
//! failures), 2 flag/usage errors. Progress goes to stderr; artifacts go to
//! files; `inspect` and `verify` print their reports to stdout.

mod cfg;
mod commands;
mod manifest;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "lft",
    version,
    about = "Logits-based fine-tuning toolkit: corpora, sparse logits datasets, four-mode training, evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (train/test splits + vocabulary)
    GenCorpus(commands::GenCorpusArgs),
    /// Train a teacher model on a corpus (supervised)
    TrainTeacher(commands::TrainTeacherArgs),
    /// Run a teacher over a corpus and store top-K logits (LFTD file)
    GenLogits(commands::GenLogitsArgs),
    /// Train a student under one of the four loss modes
    Train(commands::TrainArgs),
    /// Greedy exact-match evaluation of a checkpoint
    Eval(commands::EvalArgs),
    /// Mode × data-fraction × seed comparison grid
    Sweep(commands::SweepArgs),
    /// Re-materialize every target in a dataset and check the constraints
    Verify(commands::VerifyArgs),
    /// Print one record's combined targets as a table
    Inspect(commands::InspectArgs),
    /// Convert line-delimited external logits into an LFTD dataset
    ImportLogits(commands::ImportLogitsArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenCorpus(a) => commands::gen_corpus(a),
        Command::TrainTeacher(a) => commands::train_teacher(a),
        Command::GenLogits(a) => commands::gen_logits(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Verify(a) => commands::verify(a),
        Command::Inspect(a) => commands::inspect(a),
        Command::ImportLogits(a) => commands::import_logits(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
