use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use contagion_cva::cli::{self, RunOptions};
use contagion_cva::config::RunConfig;

#[derive(Parser)]
#[command(name = "cva", version, about = "Bilateral CDS spreads and CVA under close-out conventions")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price the configured table and write CSV, text and manifest files.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Start from a shipped preset (table1..table5); the config file
        /// is merged over it.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the invariant suites.
    Verify { config: PathBuf },
}

fn main() -> ExitCode {
    match Args::parse().command {
        Command::Run { config, out, preset, threads } => {
            let outcome = cli::run(&config, &RunOptions { out, preset, threads });
            if let Some(t) = &outcome.table {
                print!("{}", t.to_text());
            }
            for e in &outcome.manifest.errors {
                eprintln!("{}: {e}", cli::FAILED);
            }
            if outcome.exit_code != 0 {
                eprintln!("{}", serde_json::json!({ "status": cli::FAILED, "errors": outcome.manifest.errors }));
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Command::Verify { config } => {
            let cfg = match RunConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{}: {e}", cli::FAILED);
                    return ExitCode::from(2);
                }
            };
            let suites = cli::verify(&cfg);
            for s in &suites {
                println!("{}", s.line());
            }
            if suites.iter().all(|s| s.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
