//! Command-line front end: dataset generation, training, cross-validation,
//! the four-mode ablation study, and embedding export.

mod commands;
mod parallel;
mod settings;

use clap::{Parser, Subcommand};
use dcsl::Error;

use settings::CommonFlags;

#[derive(Parser)]
#[command(
    name = "dcsl",
    version,
    about = "Cost-sensitive discriminative training on feature-vector datasets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic imbalanced dataset CSV.
    GenData(CommonFlags),
    /// Train one model on the full dataset.
    Train(CommonFlags),
    /// Stratified k-fold cross-validation.
    Crossval(CommonFlags),
    /// Compare the four loss modes on identical folds.
    Ablate(CommonFlags),
    /// Train, then export the deep features of every example.
    ExportEmbeddings(CommonFlags),
}

/// 0 = success, 1 = validation error, 2 = runtime/training error.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::TrainingDiverged(_) | Error::Io(_) => 2,
        _ => 1,
    }
}

fn run(command: &Command) -> dcsl::Result<()> {
    let flags = match command {
        Command::GenData(f)
        | Command::Train(f)
        | Command::Crossval(f)
        | Command::Ablate(f)
        | Command::ExportEmbeddings(f) => f,
    };
    let settings = flags.resolve()?;
    match command {
        Command::GenData(_) => commands::gen_data(&settings),
        Command::Train(_) => commands::train(&settings),
        Command::Crossval(_) => commands::crossval(&settings),
        Command::Ablate(_) => commands::ablate(&settings),
        Command::ExportEmbeddings(_) => commands::export_embeddings(&settings),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                eprint!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    if let Err(e) = run(&cli.command) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}
