use std::process::ExitCode;

use clap::Parser;
use youden_cli::{run, Command, Overrides, RunConfig};

/// Gibbs-posterior and bootstrap inference for Youden-index cutoffs.
#[derive(Parser)]
#[command(name = "youden", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = RunConfig::resolve(&cli.overrides).and_then(|config| run(cli.command, &config));
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
