//! Command-line surface for the density-transfer pipeline.
//!
//! Exit codes: 0 on success, 1 on runtime or data errors, 2 on usage
//! errors (bad flags, unparseable flag values, missing required flags).

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};

use commands::{bench, eval, fit, gen, plot, transfer};

#[derive(Parser)]
#[command(name = "krda", version, about = "Density-transfer domain adaptation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV.
    Gen(gen::GenArgs),
    /// Jointly fit the source/target density model.
    Fit(fit::FitArgs),
    /// Transfer every source row into the target domain.
    Transfer(transfer::TransferArgs),
    /// Train the classifier on a labeled CSV and score it on a test CSV.
    Eval(eval::EvalArgs),
    /// Run a benchmark suite end to end and tabulate accuracies.
    Bench(bench::BenchArgs),
    /// Render source/target/transferred scatter plots as SVG.
    Plot(plot::PlotArgs),
}

/// Errors that should exit with the usage code instead of the runtime
/// code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => gen::run(args),
        Command::Fit(args) => fit::run(args),
        Command::Transfer(args) => transfer::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Bench(args) => bench::run(args),
        Command::Plot(args) => plot::run(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        let code = if err.downcast_ref::<UsageError>().is_some() {
            2
        } else {
            1
        };
        std::process::exit(code);
    }
}
