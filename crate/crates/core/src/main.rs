use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rrac::commands::{
    cmd_certify, cmd_report, cmd_solve, cmd_validate, CommandError, CommandOutcome, DEFAULT_OUT_DIR,
    EXIT_USAGE, OUT_DIR_ENV,
};

/// Certify random relaxed asymptotic contractions on finite random normed
/// modules and compute their fixed points.
#[derive(Debug, Parser)]
#[command(name = "rrac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the staged hypothesis audit.
    Validate {
        scenario: PathBuf,
        #[arg(long, env = OUT_DIR_ENV, default_value = DEFAULT_OUT_DIR)]
        out: PathBuf,
    },
    /// Run the Picard iteration with diagnostics and write the trace CSV.
    Solve {
        scenario: PathBuf,
        #[arg(long, env = OUT_DIR_ENV, default_value = DEFAULT_OUT_DIR)]
        out: PathBuf,
    },
    /// Run the lemma suite.
    Certify {
        scenario: PathBuf,
        #[arg(long, env = OUT_DIR_ENV, default_value = DEFAULT_OUT_DIR)]
        out: PathBuf,
    },
    /// Merge report files into a scenario × stage × verdict table.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<CommandOutcome, CommandError> {
    match cli.command {
        Command::Validate { scenario, out } => cmd_validate(&scenario, &out),
        Command::Solve { scenario, out } => cmd_solve(&scenario, &out),
        Command::Certify { scenario, out } => cmd_certify(&scenario, &out),
        Command::Report { files } => cmd_report(&files).map(|(outcome, _)| outcome),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            if !outcome.summary.ends_with('\n') {
                println!();
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
